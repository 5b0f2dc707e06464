"""Full-batch clipped gradient descent with per-step Gaussian noise.

One update on the quadratic per-sample loss (phi_i . theta - y_i)^2 is

    theta <- theta - eta * mean_i clip(g_i) + sqrt(eta) * (2 c/n) * sigma * xi

with g_i = 2 (phi_i . theta - y_i) phi_i, clip(g) = g / max(1, |g|/c), and xi
standard normal. Because g_i is a scalar multiple of phi_i, clipping reduces
to rescaling the residual, so a step costs two (n x p) mat-vecs and never
materializes per-sample gradients.

``run_gd`` is the sigma = 0, no-clipping special case routed through the very
same loop, so the two agree bit-for-bit when neither noise nor clipping acts.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .rf_model import Dataset, FeatureMap, featurize
from .rng import NOISE, rng_from

__all__ = [
    "CHECKPOINT_DENSE_LIMIT",
    "DPGDConfig",
    "DivergenceError",
    "StabilityError",
    "Trajectory",
    "clip_gradient",
    "clipped_loss_derivative",
    "detect_clipping",
    "per_sample_gradient",
    "read_checkpoint",
    "run_dp_gd",
    "run_gd",
    "write_checkpoint",
    "write_summary_csv",
]

CHECKPOINT_DENSE_LIMIT = 10**7  # store every iterate while p*T stays below this
DIVERGENCE_NORM = 1e12

_MAGIC = b"DPGD"
_VERSION = 1


class DivergenceError(RuntimeError):
    """Iterates became non-finite or astronomically large."""


class StabilityError(ValueError):
    """Step size exceeds the descent stability bound."""


@dataclass(frozen=True)
class DPGDConfig:
    """Hyper-parameters of one descent run.

    c_clip = math.inf is the documented "never clip" sentinel; c_clip <= 0 is
    rejected because a nonpositive radius clips every gradient to nothing.
    """

    eta: float
    steps: int
    c_clip: float = math.inf
    sigma: float = 0.0
    theta0: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.eta > 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")
        if not self.c_clip > 0.0:
            raise ValueError(f"c_clip must be positive (or inf), got {self.c_clip}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def eta_t(self) -> float:
        """Realized continuous time eta*T covered by the run."""
        return self.eta * self.steps


@dataclass(frozen=True)
class Trajectory:
    """Recorded output of a descent run.

    ``thetas[j]`` is the iterate at step ``checkpoint_steps[j]``; every step
    is kept while p*T <= CHECKPOINT_DENSE_LIMIT, otherwise powers of two plus
    the final iterate. Per-step scalars are always dense.
    """

    config: DPGDConfig
    thetas: np.ndarray            # (k, p)
    checkpoint_steps: np.ndarray  # (k,)
    clip_events: np.ndarray       # (T, n) bool
    train_loss: np.ndarray        # (T+1,)
    theta_norm: np.ndarray        # (T+1,)
    seed: int | None = None
    wiener: np.ndarray | None = None  # (T, p) Brownian increments, if recorded

    @property
    def final(self) -> np.ndarray:
        return self.thetas[-1]

    @property
    def clip_fraction(self) -> np.ndarray:
        if self.clip_events.size == 0:
            return np.zeros(self.clip_events.shape[0])
        return self.clip_events.mean(axis=1)

    @property
    def eta_t(self) -> float:
        return self.config.eta_t


def per_sample_gradient(theta: np.ndarray, phi: np.ndarray, y) -> np.ndarray:
    """Gradient(s) of (phi . theta - y)^2: one row per sample if phi is 2-d."""
    resid = phi @ theta - y
    if phi.ndim == 1:
        return 2.0 * resid * phi
    return 2.0 * resid[:, None] * phi


def clip_gradient(g: np.ndarray, c_clip: float) -> tuple[np.ndarray, bool]:
    """Rescale g onto the c_clip ball; the flag says whether that did anything."""
    if not c_clip > 0.0:
        raise ValueError(f"c_clip must be positive (or inf), got {c_clip}")
    norm = float(np.linalg.norm(g))
    if norm > c_clip:
        return g * (c_clip / norm), True
    return np.asarray(g, dtype=float), False


def clipped_loss_derivative(z, feat_norm, c_clip):
    """Derivative of the clipped per-sample loss at residual z.

    Equals 2z * min(1, c_clip / (2|z| * feat_norm)); at z = 0 the min is
    taken as 1 so the value is 0, matching the unclipped derivative.
    """
    z = np.asarray(z, dtype=float)
    feat_norm = np.asarray(feat_norm, dtype=float)
    if not c_clip > 0.0:
        raise ValueError(f"c_clip must be positive (or inf), got {c_clip}")
    if np.any(feat_norm <= 0.0):
        raise ValueError("feat_norm must be positive; a zero feature vector is degenerate")
    grad_norm = 2.0 * np.abs(z) * feat_norm
    scale = np.minimum(1.0, c_clip / np.maximum(grad_norm, 1e-300))
    out = 2.0 * z * scale
    return float(out) if out.ndim == 0 else out


class ClipReport(NamedTuple):
    flags: np.ndarray  # sample would be clipped at this iterate
    margin: float      # min_i threshold_i - |residual_i|; positive = clip-free


def detect_clipping(
    theta: np.ndarray, fm: FeatureMap, ds: Dataset, c_clip: float,
    phi: np.ndarray | None = None,
) -> ClipReport:
    """Flag samples whose residual reaches the clipping threshold at theta.

    Sample i is flagged iff |phi_i . theta - y_i| >= c_clip / (2 |phi_i|);
    the reported margin is the worst distance to that threshold.
    """
    if not c_clip > 0.0:
        raise ValueError(f"c_clip must be positive (or inf), got {c_clip}")
    if phi is None:
        phi = featurize(fm, ds.X)
    resid = np.abs(phi @ theta - ds.Y)
    thresh = c_clip / (2.0 * np.linalg.norm(phi, axis=1))
    return ClipReport(flags=resid >= thresh, margin=float(np.min(thresh - resid)))


def _checkpoint_steps(steps: int, p: int) -> np.ndarray:
    if p * steps <= CHECKPOINT_DENSE_LIMIT:
        return np.arange(steps + 1)
    keep = {0, steps}
    t = 1
    while t < steps:
        keep.add(t)
        t *= 2
    return np.asarray(sorted(keep))


def run_dp_gd(
    config: DPGDConfig,
    fm: FeatureMap,
    ds: Dataset,
    seed: int | None = None,
    phi: np.ndarray | None = None,
    record_noise: bool = False,
) -> Trajectory:
    """Run the clipped noisy descent; see the module docstring for the update.

    ``phi`` may be passed to reuse an existing featurization. ``seed`` feeds
    the NOISE stream only and may be omitted for sigma = 0 runs.
    """
    if phi is None:
        phi = featurize(fm, ds.X)
    n, p = phi.shape
    if config.sigma > 0.0 and seed is None:
        raise ValueError("a seed is required when sigma > 0")

    theta = (np.zeros(p) if config.theta0 is None
             else np.array(config.theta0, dtype=float))
    if theta.shape != (p,):
        raise ValueError(f"theta0 must have shape ({p},)")

    y = ds.Y
    feat_norms = np.linalg.norm(phi, axis=1)
    c = config.c_clip
    noise_scale = math.sqrt(config.eta) * (2.0 * c / n) * config.sigma
    rng = rng_from(seed, NOISE) if config.sigma > 0.0 else None

    keep = _checkpoint_steps(config.steps, p)
    keep_set = set(int(t) for t in keep)
    thetas = np.empty((len(keep), p))
    clip_events = np.zeros((config.steps, n), dtype=bool)
    train_loss = np.empty(config.steps + 1)
    theta_norm = np.empty(config.steps + 1)
    wiener = np.empty((config.steps, p)) if record_noise else None

    slot = 0
    if 0 in keep_set:
        thetas[slot] = theta
        slot += 1
    theta_norm[0] = np.linalg.norm(theta)

    for t in range(1, config.steps + 1):
        resid = phi @ theta - y
        train_loss[t - 1] = float(resid @ resid) / n
        if math.isfinite(c):
            grad_norms = 2.0 * np.abs(resid) * feat_norms
            clip_events[t - 1] = grad_norms > c
            scale = np.minimum(1.0, c / np.maximum(grad_norms, 1e-300))
            update = (2.0 / n) * (phi.T @ (resid * scale))
        else:
            update = (2.0 / n) * (phi.T @ resid)
        theta = theta - config.eta * update
        if rng is not None:
            xi = rng.standard_normal(p)
            theta = theta + noise_scale * xi
            if record_noise:
                wiener[t - 1] = math.sqrt(config.eta) * xi
        elif record_noise:
            wiener[t - 1] = 0.0

        nrm = float(np.linalg.norm(theta))
        theta_norm[t] = nrm
        if not math.isfinite(nrm) or nrm > DIVERGENCE_NORM:
            raise DivergenceError(
                f"iterate diverged at step {t}: |theta| = {nrm:.3e}"
            )
        if t in keep_set:
            thetas[slot] = theta
            slot += 1

    resid = phi @ theta - y
    train_loss[config.steps] = float(resid @ resid) / n
    return Trajectory(
        config=config, thetas=thetas, checkpoint_steps=keep,
        clip_events=clip_events, train_loss=train_loss,
        theta_norm=theta_norm, seed=seed, wiener=wiener,
    )


def run_gd(
    config: DPGDConfig,
    fm: FeatureMap,
    ds: Dataset,
    phi: np.ndarray | None = None,
) -> Trajectory:
    """Noiseless, unclipped descent with an explicit stability check.

    The quadratic objective has Hessian 2 Phi^T Phi / n, so eta must stay
    below n / lambda_max(Phi Phi^T); beyond it iterates oscillate and grow.
    """
    if phi is None:
        phi = featurize(fm, ds.X)
    lam_max = float(np.linalg.eigvalsh(phi @ phi.T)[-1])
    if lam_max > 0.0 and config.eta >= ds.n / lam_max:
        raise StabilityError(
            f"eta = {config.eta:.3e} is at or above the stability bound "
            f"{ds.n / lam_max:.3e}"
        )
    quiet = DPGDConfig(eta=config.eta, steps=config.steps, c_clip=math.inf,
                       sigma=0.0, theta0=config.theta0)
    return run_dp_gd(quiet, fm, ds, seed=None, phi=phi)


# ----------------------------------------------------------------------
# external formats: binary iterate checkpoints + a per-step CSV summary
# ----------------------------------------------------------------------

def write_checkpoint(traj: Trajectory, path) -> None:
    """Binary layout: magic 'DPGD', version u32, p u64, count u64, then
    count*p little-endian float64 iterates (row major)."""
    thetas = np.ascontiguousarray(traj.thetas, dtype="<f8")
    count, p = thetas.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQQ", _VERSION, p, count))
        fh.write(thetas.tobytes())


def read_checkpoint(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        version, p, count = struct.unpack("<IQQ", fh.read(20))
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        data = np.frombuffer(fh.read(count * p * 8), dtype="<f8")
    if data.size != count * p:
        raise ValueError("truncated checkpoint payload")
    return data.reshape(count, p).astype(float)


def write_summary_csv(traj: Trajectory, path) -> None:
    """Per-step scalars: step, train_loss, clip_fraction, theta_norm."""
    frac = traj.clip_fraction
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "train_loss", "clip_fraction", "theta_norm"])
        for t in range(traj.config.steps + 1):
            cf = 0.0 if t == 0 else float(frac[t - 1])
            writer.writerow([
                t,
                f"{traj.train_loss[t]:.17g}",
                f"{cf:.17g}",
                f"{traj.theta_norm[t]:.17g}",
            ])
