"""Test statistics: projections, quadratic norms, ANOVA F, spacings
statistics, the quadratic-basis statistic, and an invariance checker.

Every statistic accepts a single observation or a batch with replicates
along the leading axis; the replicate axis is preserved in the output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .models import SpacingsSample
from .rng import as_generator

#: Quadrature grid for checking basis orthogonality on [0, 1].
_ORTHO_GRID = 2049


# --------------------------------------------------------------------- #
# Core statistics
# --------------------------------------------------------------------- #


def np_statistic(m: np.ndarray, x: np.ndarray) -> float | np.ndarray:
    """Neyman-Pearson projection ``m'x / ||m||`` for a known direction ``m``."""
    m = np.asarray(m, dtype=float)
    norm = np.linalg.norm(m)
    if norm == 0.0:
        raise ValueError("m must have positive norm")
    out = np.asarray(x, dtype=float) @ m / norm
    return float(out) if np.ndim(out) == 0 else out


def chisq_statistic(x: np.ndarray) -> float | np.ndarray:
    """Squared Euclidean norm ``||x||^2``."""
    x = np.asarray(x, dtype=float)
    out = np.sum(x * x, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def sample_variance_statistic(x: np.ndarray) -> float | np.ndarray:
    """Sample variance ``sum (x_i - xbar)^2 / n``, a permutation-invariant statistic."""
    x = np.asarray(x, dtype=float)
    out = x.var(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def anova_f(x: np.ndarray) -> float | np.ndarray:
    """One-way ANOVA F statistic for an ``n x nu`` table (rows are groups).

    Accepts batches shaped ``(..., n, nu)``.  Raises on zero within-group
    variance.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim < 2:
        raise ValueError("need an n x nu table")
    n, nu = x.shape[-2], x.shape[-1]
    if n < 2 or nu < 2:
        raise ValueError("need n >= 2 groups and nu >= 2 replicates")
    row_means = x.mean(axis=-1)
    grand = row_means.mean(axis=-1, keepdims=True)
    between = nu * np.sum((row_means - grand) ** 2, axis=-1) / (n - 1)
    within = np.sum((x - row_means[..., None]) ** 2, axis=(-2, -1)) / (n * (nu - 1))
    if np.any(within == 0.0):
        raise ZeroDivisionError("zero within-group variance")
    out = between / within
    return float(out) if np.ndim(out) == 0 else out


def moran(d: SpacingsSample | np.ndarray) -> float | np.ndarray:
    """Moran's statistic ``sum log d_i``; requires strictly positive spacings."""
    dv = d.d if isinstance(d, SpacingsSample) else np.asarray(d, dtype=float)
    if np.any(dv <= 0.0):
        raise ValueError("moran requires strictly positive spacings")
    out = np.sum(np.log(dv), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def greenwood(d: SpacingsSample | np.ndarray) -> float | np.ndarray:
    """Greenwood's statistic ``sum d_i^2``."""
    dv = d.d if isinstance(d, SpacingsSample) else np.asarray(d, dtype=float)
    out = np.sum(dv * dv, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def two_spacings_statistic(
    u: np.ndarray, f: str | Callable[[np.ndarray], np.ndarray] = "square"
) -> float | np.ndarray:
    """Overlapping 2-spacings statistic ``sum_i f(U_{i+2} - U_i)``.

    ``u`` holds the ordered sample on [0, 1] (shape ``(..., n)``); the
    endpoints 0 and 1 are appended internally.  Built-in ``f``: ``"square"``
    and ``"log"``.
    """
    u = np.asarray(u, dtype=float)
    fn = _TWO_SPACING_FNS.get(f, f) if isinstance(f, str) else f
    if isinstance(fn, str):
        raise ValueError(f"unknown built-in f {f!r}")
    pad = [(0, 0)] * (u.ndim - 1) + [(1, 1)]
    padded = np.pad(u, pad, constant_values=(0.0, 1.0))
    gaps = padded[..., 2:] - padded[..., :-2]
    out = np.sum(fn(gaps), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _two_spacing_log(g: np.ndarray) -> np.ndarray:
    if np.any(g <= 0.0):
        raise ValueError("log variant requires strictly positive 2-spacings")
    return np.log(g)


_TWO_SPACING_FNS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "square": np.square,
    "log": _two_spacing_log,
}


def points_from_spacings(d: np.ndarray) -> np.ndarray:
    """Ordered sample points implied by a spacings vector (drops the final 1)."""
    dv = d.d if isinstance(d, SpacingsSample) else np.asarray(d, dtype=float)
    return np.cumsum(dv, axis=-1)[..., :-1]


# --------------------------------------------------------------------- #
# Quadratic basis statistic
# --------------------------------------------------------------------- #


def cosine_basis(num_terms: int) -> tuple[Callable[[np.ndarray], np.ndarray], ...]:
    """The default orthonormal basis ``sqrt(2) cos(2 pi i x)``, i = 1..K."""

    def make(i: int) -> Callable[[np.ndarray], np.ndarray]:
        return lambda x: np.sqrt(2.0) * np.cos(2.0 * np.pi * i * np.asarray(x, float))

    return tuple(make(i) for i in range(1, num_terms + 1))


@dataclass(frozen=True)
class QuadraticTestSpec:
    """Weights and basis for the quadratic goodness-of-fit statistic.

    ``squared=True`` (the default) sums ``lambda_i Z_i^2`` over standardized
    basis projections ``Z_i``; ``squared=False`` keeps the unsquared linear
    combination ``sum lambda_i Z_i``.
    """

    lambdas: tuple[float, ...]
    basis: tuple[Callable[[np.ndarray], np.ndarray], ...] = ()
    squared: bool = True

    def __post_init__(self) -> None:
        lambdas = tuple(float(v) for v in self.lambdas)
        if not lambdas or any(v <= 0 for v in lambdas):
            raise ValueError("all weights must be positive")
        basis = self.basis or cosine_basis(len(lambdas))
        if len(basis) != len(lambdas):
            raise ValueError("need one basis function per weight")
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "basis", tuple(basis))
        self._check_orthogonal()

    def _check_orthogonal(self) -> None:
        xs = np.linspace(0.0, 1.0, _ORTHO_GRID)
        vals = np.stack([np.asarray(g(xs), float) for g in self.basis])
        for i in range(len(self.basis)):
            for j in range(i):
                inner = simpson(vals[i] * vals[j], x=xs)
                if abs(inner) > 1e-6:
                    raise ValueError(
                        f"basis functions {i} and {j} are not orthogonal "
                        f"(inner product {inner:.2e})"
                    )

    @property
    def num_terms(self) -> int:
        return len(self.lambdas)

    def grid_matrix(self, n: int) -> np.ndarray:
        """Basis values on the grid ``j/n``, ``j = 1..n`` (shape ``K x n``)."""
        grid = np.arange(1, n + 1, dtype=float) / n
        return np.stack([np.asarray(g(grid), float) for g in self.basis])


def default_quadratic_spec(num_terms: int = 8, squared: bool = True) -> QuadraticTestSpec:
    """Weights ``2^-i`` on the cosine basis."""
    return QuadraticTestSpec(
        lambdas=tuple(2.0**-i for i in range(1, num_terms + 1)), squared=squared
    )


def quadratic_statistic(spec: QuadraticTestSpec, x: np.ndarray) -> float | np.ndarray:
    """Weighted (optionally squared) standardized basis projections of ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n < spec.num_terms:
        raise ValueError("need at least as many observations as basis terms")
    g = spec.grid_matrix(n)
    norms = np.sqrt(np.sum(g * g, axis=1))
    if np.any(norms == 0.0):
        raise ValueError("a basis function vanishes identically on the grid")
    z = x @ g.T / norms
    lam = np.asarray(spec.lambdas)
    out = (z * z) @ lam if spec.squared else z @ lam
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------- #
# Invariance checking
# --------------------------------------------------------------------- #

def apply_group_element(g, x: np.ndarray) -> np.ndarray:
    """Apply a permutation (1-D index array), matrix (2-D), or callable to ``x``."""
    if callable(g):
        return g(x)
    g = np.asarray(g)
    if g.ndim == 1:
        return np.asarray(x)[..., g]
    if g.ndim == 2:
        return np.asarray(x) @ g.T
    raise TypeError("group element must be a permutation, a matrix, or a callable")


def permutation_sampler(n: int) -> Callable[[np.random.Generator], np.ndarray]:
    """Sampler of uniform permutations of ``{0..n-1}``."""
    return lambda rng: rng.permutation(n)


def verify_invariance(
    statistic: Callable[[np.ndarray], float],
    group_element_sampler: Callable[[np.random.Generator], object],
    x: np.ndarray,
    reps: int = 32,
    seed: int | np.random.Generator = 0,
) -> bool:
    """True iff ``|T(gx) - T(x)| <= 1e-9 (1 + |T(x)|)`` for all sampled ``g``."""
    rng = as_generator(seed)
    x = np.asarray(x, dtype=float)
    base = float(statistic(x))
    tol = 1e-9 * (1.0 + abs(base))
    for _ in range(reps):
        g = group_element_sampler(rng)
        if abs(float(statistic(apply_group_element(g, x))) - base) > tol:
            return False
    return True
