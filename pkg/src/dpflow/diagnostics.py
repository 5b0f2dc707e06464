"""Structural checks on a fitted instance: spectrum, clipping, regime.

These are read-only analyses of objects built elsewhere — a spectral
decomposition, a recorded trajectory, or just the problem sizes — each
reduced to a small report that the ``diagnose`` CLI task can print or dump
to CSV.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .dp_gd import Trajectory
from .dynamics import SpectralDecomp
from .rf_model import Dataset, FeatureMap, featurize

__all__ = [
    "CertReport",
    "RegimeError",
    "RegimeReport",
    "SpectrumReport",
    "clip_free_certificate",
    "regime_check",
    "spectrum_report",
]


class RegimeError(ValueError):
    """Sizes outside the range where the analysis makes sense."""


class SpectrumReport(NamedTuple):
    """Kernel eigenvalues at the three structurally meaningful positions.

    The top d eigenvalues carry the signal directions, so the size of the
    drop lambda_d / lambda_{d+1} and the floor lambda_min describe how
    cleanly the kernel separates signal from bulk.
    """

    lambda_d: float
    lambda_d_plus_1: float
    lambda_min: float
    gap_ratio: float
    n: int
    d: int
    p: int


def spectrum_report(sd: SpectralDecomp, d: int) -> SpectrumReport:
    """Read off lambda_d, lambda_{d+1} and lambda_min of Phi Phi^T."""
    if d < 1:
        raise ValueError(f"d must be positive, got {d}")
    if sd.n <= d:
        raise RegimeError(
            f"need more samples than data dimensions (n = {sd.n}, d = {d})"
        )
    lam = sd.eigvals_K
    lam_d = float(lam[d - 1])
    lam_d1 = float(lam[d])
    return SpectrumReport(
        lambda_d=lam_d,
        lambda_d_plus_1=lam_d1,
        lambda_min=float(lam[-1]),
        gap_ratio=lam_d / lam_d1 if lam_d1 > 0.0 else math.inf,
        n=sd.n, d=d, p=sd.p,
    )


class CertReport(NamedTuple):
    """Clipping-freeness of a recorded trajectory.

    ``clip_free`` holds iff every sample sits strictly inside its clipping
    threshold at every stored iterate. ``margin`` is the worst distance to
    a threshold at the stored iterates minus ``slack``, a deterministic
    bound on how far residuals can drift across unstored steps (each step
    moves theta by at most eta * c_clip, so sample i's residual by at most
    eta * c_clip * |phi_i|). With dense checkpoints the slack is zero.
    """

    clip_free: bool
    margin: float
    slack: float


def clip_free_certificate(
    traj: Trajectory,
    fm: FeatureMap,
    ds: Dataset,
    c_clip: float | None = None,
    phi: np.ndarray | None = None,
) -> CertReport:
    """Certify that no sample would have been clipped along a trajectory."""
    if c_clip is None:
        c_clip = traj.config.c_clip
    if not c_clip > 0.0:
        raise ValueError(f"c_clip must be positive (or inf), got {c_clip}")
    if phi is None:
        phi = featurize(fm, ds.X)
    feat_norms = np.linalg.norm(phi, axis=1)
    thresh = c_clip / (2.0 * feat_norms)
    resid = phi @ traj.thetas.T - ds.Y[:, None]   # (n, k)
    margins = thresh[:, None] - np.abs(resid)
    raw = float(margins.min())
    gaps = np.diff(traj.checkpoint_steps)
    widest = int(gaps.max()) if gaps.size else 1
    if widest <= 1 or not math.isfinite(c_clip):
        slack = 0.0
    else:
        slack = (widest - 1) * traj.config.eta * c_clip * float(feat_norms.max())
    return CertReport(clip_free=raw > 0.0, margin=raw - slack, slack=slack)


class RegimeReport(NamedTuple):
    """How the sizes (n, d, p) compare to the analysis' working range.

    Each ratio is normalized so that 1.0 is the boundary with all implied
    constants set to one; ``ok_*`` says which side the configuration is on.
    Purely informational: real constants are unknown, so a False here is a
    caveat, not an error.
    """

    n: int
    d: int
    p: int
    n_sq_over_p: float        # want <= 1:  n grows no faster than sqrt(p)
    log_p_over_log_n: float   # want >= 1:  p at least polynomial in n
    n_over_d_log2d: float     # want >= 1:  enough samples per direction
    n_log3d_over_d32: float   # want <= 1:  not so many that noise dominates

    @property
    def ok_n_vs_p(self) -> bool:
        return self.n_sq_over_p <= 1.0

    @property
    def ok_logs(self) -> bool:
        return self.log_p_over_log_n >= 1.0

    @property
    def ok_lower(self) -> bool:
        return self.n_over_d_log2d >= 1.0

    @property
    def ok_upper(self) -> bool:
        return self.n_log3d_over_d32 <= 1.0

    @property
    def in_regime(self) -> bool:
        return self.ok_n_vs_p and self.ok_logs and self.ok_lower and self.ok_upper


def regime_check(n: int, d: int, p: int) -> RegimeReport:
    """Report the four size ratios; see RegimeReport for their reading."""
    if n < 2 or d < 1 or p < 1:
        raise ValueError(f"need n >= 2, d >= 1, p >= 1; got ({n}, {d}, {p})")
    log_d = math.log(d)
    ratio_lower = n / (d * log_d**2) if log_d > 0.0 else math.inf
    return RegimeReport(
        n=n, d=d, p=p,
        n_sq_over_p=n**2 / p,
        log_p_over_log_n=math.log(p) / math.log(n),
        n_over_d_log2d=ratio_lower,
        n_log3d_over_d32=n * log_d**3 / d**1.5,
    )
