"""Random-features regression model: data law, feature maps, kernels.

The data law is fixed throughout the package: covariates are isotropic
Gaussian vectors rescaled to lie on the sphere of radius sqrt(d), labels are
noiseless signs of a hidden linear teacher, and features are
phi(x) = act(V x) with V having i.i.d. N(0, 1/d) entries so that the
pre-activations are standard normal.

Admissibility of an activation means its Gaussian-Hermite expansion has no
constant and no quadratic component but a nonzero linear one; tanh and the
identity qualify, ReLU does not (nonzero mean).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from numpy.polynomial import hermite_e

from .rng import DATA, FEATURES, rng_from

__all__ = [
    "AdmissibilityError",
    "Dataset",
    "FeatureMap",
    "HermiteCoeffs",
    "featurize",
    "hermite_coeffs",
    "init_features",
    "kernel",
    "load_dataset_csv",
    "sample_data",
    "save_dataset_csv",
]

# tolerances for the admissibility test |mu_0|, |mu_2| <= EVEN_TOL, |mu_1| > LIN_TOL
EVEN_TOL = 1e-10
LIN_TOL = 1e-10

ActivationLike = Union[str, Callable[[np.ndarray], np.ndarray]]

_BUILTIN_ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "tanh": np.tanh,
    "identity": lambda z: np.asarray(z, dtype=float),
}


class AdmissibilityError(ValueError):
    """Raised when an activation violates the expansion constraints."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _resolve_activation(activation: ActivationLike) -> Callable[[np.ndarray], np.ndarray]:
    if callable(activation):
        return activation
    try:
        return _BUILTIN_ACTIVATIONS[activation]
    except KeyError:
        raise ValueError(
            f"unknown activation {activation!r}; use 'tanh', 'identity' or a callable"
        ) from None


@dataclass(frozen=True)
class HermiteCoeffs:
    """Normalized Hermite coefficients mu_0..mu_order of an activation.

    ``values[l]`` is E[act(rho) He_l(rho)] / sqrt(l!) for standard normal rho,
    computed by Gauss-Hermite quadrature with ``nodes`` nodes. In this basis
    E[act(rho)^2] = sum_l values[l]^2 when the expansion converges.
    """

    values: np.ndarray
    order: int
    nodes: int
    sq_mean: float  # quadrature value of E[act(rho)^2], for Parseval checks

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _readonly(self.values))
        if self.values.shape != (self.order + 1,):
            raise ValueError("values must have length order+1")
        if float(np.sum(self.values**2)) > self.sq_mean + 1e-8:
            raise ValueError("Hermite coefficients violate the Parseval bound")

    def is_admissible(self) -> bool:
        mu = self.values
        return (
            abs(mu[0]) <= EVEN_TOL
            and abs(mu[2]) <= EVEN_TOL
            and abs(mu[1]) > LIN_TOL
        )


def hermite_coeffs(
    activation: ActivationLike,
    order: int = 12,
    nodes: int = 200,
    strict: bool = False,
) -> HermiteCoeffs:
    """Expand an activation in the normalized probabilists' Hermite basis.

    Args:
        activation: 'tanh', 'identity', or an elementwise callable.
        order: highest coefficient index (>= 3 so admissibility is decidable).
        nodes: Gauss-Hermite node count (>= 4*order for accuracy).
        strict: raise AdmissibilityError if the activation is inadmissible.
    """
    if order < 3:
        raise ValueError(f"order must be >= 3, got {order}")
    if nodes < 4 * order:
        raise ValueError(f"nodes must be >= 4*order = {4 * order}, got {nodes}")
    act = _resolve_activation(activation)

    z, w = hermite_e.hermegauss(nodes)
    w = w / w.sum()  # weights for E[.] under N(0, 1)
    fz = np.asarray(act(z), dtype=float)

    values = np.empty(order + 1)
    coeff = np.zeros(order + 1)
    for ell in range(order + 1):
        coeff[:] = 0.0
        coeff[ell] = 1.0
        he = hermite_e.hermeval(z, coeff)
        values[ell] = float(np.sum(w * fz * he)) / math.sqrt(math.factorial(ell))

    out = HermiteCoeffs(values=values, order=order, nodes=nodes,
                        sq_mean=float(np.sum(w * fz * fz)))
    if strict and not out.is_admissible():
        raise AdmissibilityError(
            f"activation is not admissible: mu0={values[0]:.3e}, "
            f"mu1={values[1]:.3e}, mu2={values[2]:.3e}"
        )
    return out


@dataclass(frozen=True)
class Dataset:
    """Labelled sample (X, Y) with the hidden teacher that generated it.

    Rows of X have Euclidean norm exactly sqrt(d) (up to 1e-12) and labels
    lie in [-1, 1]. ``u`` and ``seed`` may be absent for datasets loaded from
    external files.
    """

    X: np.ndarray
    Y: np.ndarray
    u: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "X", _readonly(self.X))
        object.__setattr__(self, "Y", _readonly(self.Y))
        if self.u is not None:
            object.__setattr__(self, "u", _readonly(self.u))
        if self.X.ndim != 2:
            raise ValueError("X must be n x d")
        n, d = self.X.shape
        if self.Y.shape != (n,):
            raise ValueError("Y must have one label per row of X")
        norms = np.linalg.norm(self.X, axis=1)
        if not np.allclose(norms, math.sqrt(d), rtol=0.0, atol=1e-12):
            raise ValueError("rows of X must have norm sqrt(d)")
        if np.max(np.abs(self.Y)) > 1.0 + 1e-12:
            raise ValueError("labels must lie in [-1, 1]")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class FeatureMap:
    """Random feature map x -> act(V x) with V of shape (p, d)."""

    V: np.ndarray
    activation: ActivationLike = "tanh"
    seed: int | None = None
    _act: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False, default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "V", _readonly(self.V))
        if self.V.ndim != 2:
            raise ValueError("V must be p x d")
        object.__setattr__(self, "_act", _resolve_activation(self.activation))

    @property
    def p(self) -> int:
        return self.V.shape[0]

    @property
    def d(self) -> int:
        return self.V.shape[1]


def sample_data(n: int, d: int, seed: int) -> Dataset:
    """Draw n covariates on the sqrt(d)-sphere and sign-teacher labels.

    The teacher u is uniform on the unit sphere; y = sign(u . x) with the
    probability-zero tie broken to +1.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = rng_from(seed, DATA)
    x = rng.standard_normal((n, d))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    # a zero-norm row has probability zero but would poison the rescale
    while np.any(norms == 0.0):  # pragma: no cover
        bad = norms[:, 0] == 0.0
        x[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(x, axis=1, keepdims=True)
    x *= math.sqrt(d) / norms
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    y = np.sign(x @ u)
    y[y == 0.0] = 1.0
    return Dataset(X=x, Y=y, u=u, seed=seed)


def init_features(
    p: int, d: int, seed: int, activation: ActivationLike = "tanh"
) -> FeatureMap:
    """Draw a feature map with i.i.d. N(0, 1/d) entries.

    User-supplied callables are admissibility-checked; the built-in names are
    known admissible and skip the quadrature.
    """
    if p < 1 or d < 1:
        raise ValueError("p and d must be positive")
    if callable(activation):
        hermite_coeffs(activation, strict=True)
    v = rng_from(seed, FEATURES).standard_normal((p, d)) / math.sqrt(d)
    return FeatureMap(V=v, activation=activation, seed=seed)


def featurize(fm: FeatureMap, x: np.ndarray) -> np.ndarray:
    """Map one point (d,) or a batch (m, d) through the feature map."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != fm.d:
        raise ValueError(
            f"dimension mismatch: feature map expects d={fm.d}, got {x.shape[-1]}"
        )
    if x.ndim not in (1, 2):
        raise ValueError("x must be a vector or a batch of row vectors")
    return fm._act(x @ fm.V.T)


def kernel(fm: FeatureMap, ds: Dataset) -> np.ndarray:
    """Gram matrix K = Phi Phi^T of the featurized sample (symmetrized)."""
    phi = featurize(fm, ds.X)
    k = phi @ phi.T
    asym = float(np.max(np.abs(k - k.T)))
    if asym > 1e-10 * max(1.0, float(np.max(np.abs(k)))):
        raise FloatingPointError(f"kernel asymmetry {asym:.3e} beyond tolerance")
    return (k + k.T) / 2.0


def save_dataset_csv(ds: Dataset, path) -> None:
    """Write a dataset as x_1..x_d,y rows (teacher/seed are not stored)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{j + 1}" for j in range(ds.d)] + ["y"])
        for xi, yi in zip(ds.X, ds.Y):
            writer.writerow([f"{v:.17g}" for v in xi] + [f"{yi:.17g}"])


def load_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "y":
            raise ValueError("expected a trailing 'y' column")
        rows = [[float(v) for v in row] for row in reader]
    data = np.asarray(rows)
    return Dataset(X=data[:, :-1], Y=data[:, -1])
