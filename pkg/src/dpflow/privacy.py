"""Privacy budgets, noise calibration, and the analytic moment accountant.

The noisy full-batch update releases a Gaussian-perturbed mean of clipped
per-sample gradients. Its per-step L2 sensitivity is 2*eta*c_clip/n, so each
step's privacy-loss log-MGF is bounded by (eta/(2*sigma^2)) * (lam + lam^2)
and T steps compose additively. Calibrating

    sigma = sqrt(eta*T) * sqrt(8*log(1/delta)) / epsilon

makes the tail bound exp(alpha(lam*) - lam*eps) at lam* = 4*log(1/delta)/eps
come out to exactly delta, which is the identity ``verify_tail`` checks.

Everything here is closed-form; the lambda-grid search exists only as a
diagnostic for eyeballing how loose the fixed-lambda bound is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

__all__ = [
    "BudgetError",
    "Hyperparams",
    "PrivacyBudget",
    "TailCheck",
    "calibrate_sigma",
    "grid_delta",
    "moment_bound",
    "scaling_hyperparams",
    "sensitivity_bound",
    "verify_tail",
]

# relative slack absorbing float rounding when sigma sits exactly on the
# calibration boundary (where achieved_delta == delta in real arithmetic)
_TAIL_RTOL = 1e-9


class BudgetError(ValueError):
    """Raised for (epsilon, delta) pairs outside the accountant's range."""


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) target with the accountant's validity range.

    delta must lie in (0, 1) and epsilon in the open interval
    (0, 8*log(1/delta)); outside it the fixed-lambda tail bound cannot reach
    delta and calibration is refused rather than silently wrong.
    """

    epsilon: float
    delta: float

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise BudgetError(f"delta must be in (0, 1), got {self.delta}")
        cap = 8.0 * math.log(1.0 / self.delta)
        if not 0.0 < self.epsilon < cap:
            raise BudgetError(
                f"epsilon must be in (0, 8*log(1/delta)) = (0, {cap:.6g}), "
                f"got {self.epsilon}"
            )

    @property
    def log_inv_delta(self) -> float:
        return math.log(1.0 / self.delta)


@dataclass(frozen=True)
class Hyperparams:
    """The size-scaling hyper-parameter rule evaluated at (n, d, p).

    Fields satisfy the identity Sigma = 2*c_clip*sigma/n, tying the SDE noise
    amplitude to the per-step algorithmic noise multiplier.
    """

    tau: float
    c_clip: float
    Sigma: float
    sigma: float
    n: int

    def __post_init__(self) -> None:
        lhs = self.Sigma
        rhs = 2.0 * self.c_clip * self.sigma / self.n
        if abs(lhs - rhs) > 1e-12 * max(1.0, abs(lhs)):
            raise ValueError("Sigma and sigma are inconsistent")


def calibrate_sigma(budget: PrivacyBudget, eta_t: float) -> float:
    """Smallest noise multiplier the tail bound certifies for total time eta*T.

    eta_t == 0 (no steps) needs no noise and returns 0.
    """
    if eta_t < 0.0:
        raise ValueError("eta*T must be nonnegative")
    if eta_t == 0.0:
        return 0.0
    return math.sqrt(eta_t) * math.sqrt(8.0 * budget.log_inv_delta) / budget.epsilon


def scaling_hyperparams(n: int, d: int, p: int, budget: PrivacyBudget) -> Hyperparams:
    """Evaluate the theoretical schedule at a concrete size (n, d, p).

    tau = d*log^2(n)/p, c_clip = sqrt(p)*log^2(n), and Sigma chosen so that
    running for time tau exhausts exactly the given budget.
    """
    if min(n, d, p) < 1:
        raise ValueError("n, d, p must be positive")
    log2n = math.log(n) ** 2
    tau = d * log2n / p
    c_clip = math.sqrt(p) * log2n
    sigma = calibrate_sigma(budget, tau)
    return Hyperparams(tau=tau, c_clip=c_clip, Sigma=2.0 * c_clip * sigma / n,
                       sigma=sigma, n=n)


def sensitivity_bound(eta: float, c_clip: float, n: int) -> float:
    """L2 distance bound between one update on adjacent datasets: 2*eta*c_clip/n."""
    if eta < 0 or c_clip < 0 or n < 1:
        raise ValueError("eta, c_clip must be nonnegative and n positive")
    return 2.0 * eta * c_clip / n


def moment_bound(lam: float, eta: float, sigma: float, steps: int) -> float:
    """Composed log-MGF bound alpha(lam) = T*(eta/(2*sigma^2))*(lam + lam^2)."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if steps == 0:
        return 0.0
    if sigma == 0.0:
        raise ValueError("sigma = 0 with steps >= 1 has unbounded privacy loss")
    return steps * (eta / (2.0 * sigma * sigma)) * (lam + lam * lam)


class TailCheck(NamedTuple):
    ok: bool
    achieved_delta: float
    lam: float


def verify_tail(budget: PrivacyBudget, eta: float, sigma: float, steps: int) -> TailCheck:
    """Evaluate the tail bound at lam* = 4*log(1/delta)/eps against delta.

    The achieved delta is exp(c*lam*^2 - lam*eps/2) with c = eta*T/(2 sigma^2),
    i.e. the final line of the fixed-lambda chain; at exact calibration it
    equals delta. The linear term the chain absorbs (c*lam <= lam*eps/2) only
    fails when c > eps/2, and there the achieved delta already exceeds delta,
    so the boolean is conservative in all cases.
    """
    lam = 4.0 * budget.log_inv_delta / budget.epsilon
    if steps == 0:
        return TailCheck(True, 0.0, lam)
    if sigma == 0.0:
        raise ValueError("sigma = 0 with steps >= 1 has unbounded privacy loss")
    c = eta * steps / (2.0 * sigma * sigma)
    log_achieved = c * lam * lam - lam * budget.epsilon / 2.0
    achieved = math.exp(log_achieved)
    ok = achieved <= budget.delta * (1.0 + _TAIL_RTOL)
    return TailCheck(ok, achieved, lam)


def grid_delta(
    epsilon: float, eta: float, sigma: float, steps: int,
    lams: Sequence[float] | None = None,
) -> float:
    """Diagnostic: minimize exp(alpha(lam) - lam*eps) over a lambda grid.

    Uses the raw composed moment bound (no chain simplification); useful to
    see how much slack the fixed lam* leaves on the table. Not used by the
    calibration path.
    """
    if lams is None:
        lams = [0.25 * k for k in range(1, 400)]
    best = math.inf
    for lam in lams:
        val = moment_bound(lam, eta, sigma, steps) - lam * epsilon
        best = min(best, val)
    return math.exp(best)
