"""Continuous-time view of the descent: gradient flow and its noisy blur.

With features Phi (n x p) and squared loss, the small-step limit of the
noisy descent is the linear SDE

    d theta = -(2/n) Phi^T (Phi theta - Y) dt + Sigma dW.

In the right-singular basis of Phi the drift decouples: mode k relaxes at
rate Delta_k = 2 s_k^2 / n toward the min-norm coefficient (u_k . Y)/s_k and
feels unit-strength noise, i.e. an Ornstein-Uhlenbeck process. Orthogonal to
the row space the drift vanishes and the motion is a pure Wiener process of
scale Sigma. Everything here works in that basis: means (gradient flow),
per-mode variances, exact draws, and an exact-transition reference solution
coupled to a shared Brownian path for strong-error studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .rf_model import Dataset, FeatureMap, featurize
from .rng import PATH, TEST, rng_from

__all__ = [
    "BrownianPath",
    "RiskReport",
    "SpectralDecomp",
    "decompose",
    "euler_maruyama",
    "excess_risk",
    "gradient_flow",
    "min_norm_solution",
    "ou_exact_from_path",
    "ou_mode_std",
    "ou_mode_variance",
    "ou_sample",
    "population_risks",
    "prediction_noise_variance",
]

_RANK_RTOL = 1e-10
_RECON_RTOL = 1e-8


@dataclass(frozen=True)
class SpectralDecomp:
    """Thin SVD Phi = U diag(s) Vt with the numerical rank pinned down.

    Rows of Vt beyond ``rank`` pad the thin factorization but do not span
    the row space; projections must use the first ``rank`` rows only.
    """

    U: np.ndarray   # (n, k)
    s: np.ndarray   # (k,) nonincreasing
    Vt: np.ndarray  # (k, p)

    def __post_init__(self) -> None:
        if np.any(np.diff(self.s) > 0.0):
            raise ValueError("singular values must be nonincreasing")
        if np.any(self.s < 0.0):
            raise ValueError("singular values must be nonnegative")

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def p(self) -> int:
        return self.Vt.shape[1]

    @property
    def rank(self) -> int:
        if self.s.size == 0 or self.s[0] == 0.0:
            return 0
        return int(np.count_nonzero(self.s > _RANK_RTOL * self.s[0]))

    @property
    def eigvals_K(self) -> np.ndarray:
        """All n eigenvalues of Phi Phi^T, nonincreasing (zero-padded if p < n)."""
        lam = self.s**2
        if lam.size < self.n:
            lam = np.concatenate([lam, np.zeros(self.n - lam.size)])
        return lam

    def mode_rates(self, n_samples: int | None = None) -> np.ndarray:
        """OU relaxation rates Delta_k = 2 s_k^2 / n for the ``rank`` live modes."""
        n = self.n if n_samples is None else n_samples
        return 2.0 * self.s[: self.rank] ** 2 / n

    def mode_targets(self, y: np.ndarray) -> np.ndarray:
        """Min-norm coefficients (u_k . y)/s_k along the live modes."""
        r = self.rank
        return (self.U[:, :r].T @ y) / self.s[:r]

    def complement_sq_norm(self, v: np.ndarray) -> float:
        """Squared norm of the component of v orthogonal to the row space."""
        w = self.Vt[: self.rank] @ v
        return max(float(v @ v - w @ w), 0.0)


def decompose(fm: FeatureMap, ds: Dataset, phi: np.ndarray | None = None) -> SpectralDecomp:
    """Thin SVD of the feature matrix, verified to reconstruct it.

    Works on Phi directly (never forms Phi^T Phi, which would square the
    condition number and cost p^2 memory).
    """
    if phi is None:
        phi = featurize(fm, ds.X)
    u, s, vt = np.linalg.svd(phi, full_matrices=False)
    resid = np.linalg.norm((u * s) @ vt - phi)
    scale = np.linalg.norm(phi)
    if scale > 0.0 and resid > _RECON_RTOL * scale:
        raise FloatingPointError(
            f"SVD failed to reconstruct the feature matrix: rel err {resid / scale:.3e}"
        )
    return SpectralDecomp(U=u, s=s, Vt=vt)


def gradient_flow(t: float, sd: SpectralDecomp, y: np.ndarray) -> np.ndarray:
    """Noiseless flow iterate theta(t) started from zero.

    Mode k approaches its min-norm coefficient as 1 - exp(-2 s_k^2 t / n).
    """
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    r = sd.rank
    coef = -np.expm1(-sd.mode_rates() * t) * sd.mode_targets(y)
    return sd.Vt[:r].T @ coef


def min_norm_solution(sd: SpectralDecomp, y: np.ndarray) -> np.ndarray:
    """t -> infinity limit of the flow: the pseudoinverse solution."""
    r = sd.rank
    return sd.Vt[:r].T @ sd.mode_targets(y)


def ou_mode_variance(t: float, sd: SpectralDecomp, Sigma: float) -> np.ndarray:
    """Variance of each live mode coefficient at time t (start at zero).

    Sigma^2 (1 - exp(-2 Delta_k t)) / (2 Delta_k), increasing to the
    stationary value Sigma^2 / (2 Delta_k); coordinates orthogonal to the
    row space instead accrue the pure Wiener variance Sigma^2 t.
    """
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    rates = sd.mode_rates()
    return Sigma**2 * (-np.expm1(-2.0 * rates * t)) / (2.0 * rates)


def ou_mode_std(t: float, sd: SpectralDecomp, Sigma: float) -> np.ndarray:
    return np.sqrt(ou_mode_variance(t, sd, Sigma))


def ou_sample(
    t: float,
    sd: SpectralDecomp,
    y: np.ndarray,
    Sigma: float,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Exact draw(s) of the SDE solution at time t, started from zero.

    Returns shape (p,) or (size, p). Each draw spends rank + p normals:
    one per live mode, then a full vector whose row-space part is discarded
    to leave the Wiener complement.
    """
    r = sd.rank
    vt = sd.Vt[:r]
    mean = -np.expm1(-sd.mode_rates() * t) * sd.mode_targets(y)
    std = ou_mode_std(t, sd, Sigma)
    squeeze = size is None
    k = 1 if squeeze else size
    modal = mean + std * rng.standard_normal((k, r))
    z = rng.standard_normal((k, sd.p)) * (Sigma * math.sqrt(t))
    z -= (z @ vt.T) @ vt
    out = modal @ vt + z
    return out[0] if squeeze else out


def prediction_noise_variance(
    x: np.ndarray, fm: FeatureMap, sd: SpectralDecomp, Sigma: float, t: float
) -> float:
    """Variance of the prediction phi(x) . theta(t) around the flow value.

    Splits phi(x) across the modes (each with its OU variance) and the
    complement (pure Wiener, Sigma^2 t per coordinate); always at most
    Sigma^2 t |phi(x)|^2.
    """
    phi_x = featurize(fm, x)
    w = sd.Vt[: sd.rank] @ phi_x
    modal = float(w**2 @ ou_mode_variance(t, sd, Sigma))
    return modal + sd.complement_sq_norm(phi_x) * Sigma**2 * t


# ----------------------------------------------------------------------
# shared-noise integration: Euler-Maruyama vs. exact OU transitions
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BrownianPath:
    """Increments of one Brownian path on a uniform grid of spacing h."""

    h: float
    increments: np.ndarray  # (steps, p), each row N(0, h I)

    @property
    def steps(self) -> int:
        return self.increments.shape[0]

    @property
    def p(self) -> int:
        return self.increments.shape[1]

    @property
    def horizon(self) -> float:
        return self.h * self.steps

    @classmethod
    def draw(cls, steps: int, p: int, h: float, seed: int) -> "BrownianPath":
        if steps < 1 or p < 1:
            raise ValueError("steps and p must be positive")
        if not h > 0.0:
            raise ValueError(f"h must be positive, got {h}")
        rng = rng_from(seed, PATH)
        return cls(h=h, increments=rng.standard_normal((steps, p)) * math.sqrt(h))

    def coarsen(self, factor: int) -> "BrownianPath":
        """Sum consecutive increments: the same path on a grid factor x coarser."""
        if factor < 1 or self.steps % factor != 0:
            raise ValueError(
                f"factor must divide the {self.steps} stored steps, got {factor}"
            )
        if factor == 1:
            return self
        merged = self.increments.reshape(self.steps // factor, factor, self.p).sum(axis=1)
        return BrownianPath(h=self.h * factor, increments=merged)


def euler_maruyama(
    phi: np.ndarray,
    y: np.ndarray,
    Sigma: float,
    path: BrownianPath,
    c_clip: float = math.inf,
    theta0: np.ndarray | None = None,
) -> np.ndarray:
    """One Euler-Maruyama pass over the path; returns the final iterate.

    theta <- theta - h (2/n) Phi^T (scale * resid) + Sigma dB, where scale
    applies the usual per-sample clipping (inactive at the default c_clip).
    The drift update reuses the descent loop's exact arithmetic, so at
    Sigma = 0 the result is bit-identical to plain GD at step size h.
    """
    n, p = phi.shape
    if path.p != p:
        raise ValueError(f"path dimension {path.p} != feature dimension {p}")
    theta = np.zeros(p) if theta0 is None else np.array(theta0, dtype=float)
    feat_norms = np.linalg.norm(phi, axis=1) if math.isfinite(c_clip) else None
    for j in range(path.steps):
        resid = phi @ theta - y
        if feat_norms is not None:
            grad_norms = 2.0 * np.abs(resid) * feat_norms
            resid = resid * np.minimum(1.0, c_clip / np.maximum(grad_norms, 1e-300))
        update = (2.0 / n) * (phi.T @ resid)
        theta = theta - path.h * update
        if Sigma != 0.0:
            theta = theta + Sigma * path.increments[j]
    return theta


def ou_exact_from_path(
    sd: SpectralDecomp,
    y: np.ndarray,
    Sigma: float,
    path: BrownianPath,
    theta0: np.ndarray | None = None,
) -> np.ndarray:
    """Reference solution driven by the same increments as ``euler_maruyama``.

    Each mode advances by its exact OU transition; the increment enters
    scaled by gamma_k(h) = sqrt((1 - exp(-2 Delta_k h)) / (2 Delta_k h)) so
    the one-step law is exact, and the coupling error against the true
    path-driven solution vanishes with h. The complement accumulates the
    raw increments (its dynamics are already exact at any h).
    """
    r = sd.rank
    vt = sd.Vt[:r]
    rates = sd.mode_rates()
    target = sd.mode_targets(y)
    h = path.h
    decay = np.exp(-rates * h)
    gamma = np.sqrt(-np.expm1(-2.0 * rates * h) / (2.0 * rates * h))
    if theta0 is None:
        a = np.zeros(r)
        comp = np.zeros(sd.p)
    else:
        a = vt @ theta0
        comp = theta0 - vt.T @ a
    for j in range(path.steps):
        db = path.increments[j]
        w = vt @ db
        a = target + decay * (a - target) + Sigma * gamma * w
        comp = comp + Sigma * (db - vt.T @ w)
    return vt.T @ a + comp


# ----------------------------------------------------------------------
# population risk, evaluated on shared draws so comparisons are paired
# ----------------------------------------------------------------------

class RiskReport(NamedTuple):
    """Paired test-risk estimates for a private iterate and its baseline."""

    risk_private: float
    stderr_private: float
    risk_baseline: float
    stderr_baseline: float
    excess: float
    stderr_excess: float
    m: int
    seed: int


def _test_chunks(d: int, u: np.ndarray, m: int, seed: int, chunk: int):
    """Yield (x, y) test batches from the data law, on the TEST stream."""
    rng = rng_from(seed, TEST)
    done = 0
    while done < m:
        k = min(chunk, m - done)
        x = rng.standard_normal((k, d))
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        while np.any(norms == 0.0):  # pragma: no cover
            bad = norms[:, 0] == 0.0
            x[bad] = rng.standard_normal((int(bad.sum()), d))
            norms = np.linalg.norm(x, axis=1, keepdims=True)
        x *= math.sqrt(d) / norms
        ysign = np.sign(x @ u)
        ysign[ysign == 0.0] = 1.0
        yield x, ysign
        done += k


def population_risks(
    thetas: np.ndarray,
    fm: FeatureMap,
    u: np.ndarray,
    m: int = 20_000,
    seed: int = 0,
    chunk: int = 2_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo risk of each row of ``thetas`` on one shared test draw.

    Each chunk of test points is featurized once and scored against every
    iterate, so estimates across rows differ only through the iterates.
    Returns (means, standard errors), each of length thetas.shape[0].
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if m < 100:
        raise ValueError(f"m must be at least 100, got {m}")
    k = thetas.shape[0]
    total = np.zeros(k)
    total_sq = np.zeros(k)
    for x, ysign in _test_chunks(fm.d, u, m, seed, chunk):
        px = featurize(fm, x)
        losses = (px @ thetas.T - ysign[:, None]) ** 2
        total += losses.sum(axis=0)
        total_sq += (losses**2).sum(axis=0)
    mean = total / m
    var = np.maximum(total_sq / m - mean**2, 0.0)
    return mean, np.sqrt(var / m)


def excess_risk(
    theta_private: np.ndarray,
    theta_baseline: np.ndarray,
    fm: FeatureMap,
    u: np.ndarray,
    m: int = 20_000,
    seed: int = 0,
    chunk: int = 2_000,
) -> RiskReport:
    """Risk gap between two iterates on one shared test draw.

    The excess standard error comes from the per-point loss differences,
    which is far tighter than differencing two independent estimates.
    """
    if m < 100:
        raise ValueError(f"m must be at least 100, got {m}")
    sums = np.zeros(3)     # private, baseline, difference
    sums_sq = np.zeros(3)
    for x, ysign in _test_chunks(fm.d, u, m, seed, chunk):
        px = featurize(fm, x)
        lp = (px @ theta_private - ysign) ** 2
        lb = (px @ theta_baseline - ysign) ** 2
        diff = lp - lb
        sums += [lp.sum(), lb.sum(), diff.sum()]
        sums_sq += [lp @ lp, lb @ lb, diff @ diff]
    mean = sums / m
    stderr = np.sqrt(np.maximum(sums_sq / m - mean**2, 0.0) / m)
    return RiskReport(
        risk_private=float(mean[0]), stderr_private=float(stderr[0]),
        risk_baseline=float(mean[1]), stderr_baseline=float(stderr[1]),
        excess=float(mean[2]), stderr_excess=float(stderr[2]),
        m=m, seed=seed,
    )
