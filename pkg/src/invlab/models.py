"""Sampling models and their likelihood ratios.

Covers the many-means normal model, one-parameter exponential families
(natural parametrisation, density ``exp(m*x - beta(m))`` against a fixed
carrier), a non-exponential one-parameter family (logistic location),
Neyman-Scott replicate layouts, and uniform spacings, together with
exact log-likelihood ratios and contiguity diagnostics (null mean and
variance of the log-likelihood ratio against the bound ``alpha *
||m - mbar||^2``).

All samplers are pure functions of ``(spec, parameters, generator)``;
types are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .rng import TAG_MODEL, TAG_SPACINGS, as_generator

#: Default compact parameter box, safely interior to every built-in family's
#: natural-parameter domain.
DEFAULT_COMPACT = (-2.0, 2.0)

#: Grid size used for numerical sup/integral checks on [0, 1] profiles.
_PROFILE_GRID = 4097

#: Composite-quadrature subintervals for integrating h^2 on [0, 1].
_HSQ_INTERVALS = 1024


# --------------------------------------------------------------------- #
# Domain types
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class MeanVector:
    """An alternative mean/parameter vector with its compact-set bounds."""

    entries: np.ndarray
    compact_lo: float | None = DEFAULT_COMPACT[0]
    compact_hi: float | None = DEFAULT_COMPACT[1]

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 1 or entries.size == 0:
            raise ValueError("entries must be a nonempty 1-D vector")
        if not np.all(np.isfinite(entries)):
            raise ValueError("entries must be finite")
        object.__setattr__(self, "entries", entries)
        if (self.compact_lo is None) != (self.compact_hi is None):
            raise ValueError("compact_lo and compact_hi must be set together")
        if self.compact_lo is not None:
            if not self.compact_lo < self.compact_hi:
                raise ValueError("compact_lo must be < compact_hi")
            if entries.min() < self.compact_lo or entries.max() > self.compact_hi:
                raise ValueError(
                    "entries outside the compact parameter box "
                    f"[{self.compact_lo}, {self.compact_hi}]"
                )

    @property
    def n(self) -> int:
        return self.entries.size

    @property
    def mean(self) -> float:
        return float(self.entries.mean())

    @property
    def centered(self) -> np.ndarray:
        return self.entries - self.entries.mean()

    @property
    def centered_norm(self) -> float:
        """The centered norm ``||m - mean(m)||``."""
        return float(np.linalg.norm(self.centered))

    @property
    def max_centered_dev(self) -> float:
        return float(np.abs(self.centered).max())


@dataclass(frozen=True)
class ExpFamilySpec:
    """A one-parameter exponential family in its natural parametrisation.

    ``beta`` is the cumulant (log-normalizer) function; ``beta1`` and
    ``beta2`` are its first two derivatives, i.e. the mean and variance of
    one observation.  ``carrier_sampler(rng, m, size)`` draws observations
    with natural parameter ``m`` (vectorised over ``m``).
    """

    name: str
    beta: Callable[[np.ndarray], np.ndarray]
    beta1: Callable[[np.ndarray], np.ndarray]
    beta2: Callable[[np.ndarray], np.ndarray]
    carrier_sampler: Callable[[np.random.Generator, np.ndarray, tuple], np.ndarray]

    def beta2_sup(self, lo: float, hi: float, grid: int = 513) -> float:
        """Numerical sup of ``beta2`` over ``[lo, hi]``."""
        ts = np.linspace(lo, hi, grid)
        return float(np.max(self.beta2(ts)))


@dataclass(frozen=True)
class GeneralFamilySpec:
    """A general (non-exponential) one-parameter family ``exp(log_density(x; m))``.

    ``score`` and ``second`` are the first two parameter derivatives of the
    log density; ``fisher(m)`` is the Fisher information.
    """

    name: str
    log_density: Callable[[np.ndarray, np.ndarray], np.ndarray]
    score: Callable[[np.ndarray, np.ndarray], np.ndarray]
    second: Callable[[np.ndarray, np.ndarray], np.ndarray]
    fisher: Callable[[float], float]
    sampler: Callable[[np.random.Generator, np.ndarray, tuple], np.ndarray]


@dataclass(frozen=True)
class NeymanScottLayout:
    """``n`` groups of ``nu`` replicates with a common standard deviation."""

    n: int
    nu: int
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("need at least 2 groups")
        if self.nu < 2:
            raise ValueError("need at least 2 replicates per group")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class SpacingsSample:
    """Spacings of ordered points on [0, 1], padded with the endpoints."""

    d: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 1 or d.size < 2:
            raise ValueError("d must be a 1-D vector of at least 2 spacings")
        if d.min() < 0:
            raise ValueError("spacings must be nonnegative")
        if abs(d.sum() - 1.0) > 1e-12:
            raise ValueError("spacings must sum to 1 within 1e-12")
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        """Number of sample points (one less than the number of spacings)."""
        return self.d.size - 1

    @property
    def points(self) -> np.ndarray:
        """The ordered sample points recovered from the spacings."""
        return np.cumsum(self.d)[:-1]


# --------------------------------------------------------------------- #
# Built-in families
# --------------------------------------------------------------------- #


def normal_family() -> ExpFamilySpec:
    """Normal location family N(m, 1): beta(m) = m^2 / 2."""
    return ExpFamilySpec(
        name="normal",
        beta=lambda m: np.square(m) / 2.0,
        beta1=lambda m: np.asarray(m, dtype=float),
        beta2=lambda m: np.ones_like(np.asarray(m, dtype=float)),
        carrier_sampler=lambda rng, m, size: rng.normal(loc=m, scale=1.0, size=size),
    )


def poisson_family() -> ExpFamilySpec:
    """Poisson family with natural parameter m: beta(m) = exp(m)."""
    return ExpFamilySpec(
        name="poisson",
        beta=np.exp,
        beta1=np.exp,
        beta2=np.exp,
        carrier_sampler=lambda rng, m, size: rng.poisson(
            lam=np.broadcast_to(np.exp(m), size), size=size
        ).astype(float),
    )


def bernoulli_logit_family() -> ExpFamilySpec:
    """Bernoulli family with log-odds parameter m: beta(m) = log(1 + exp(m))."""

    def _sample(rng: np.random.Generator, m: np.ndarray, size: tuple) -> np.ndarray:
        p = _sigmoid(np.asarray(m, dtype=float))
        return (rng.random(size) < p).astype(float)

    return ExpFamilySpec(
        name="bernoulli",
        beta=lambda m: np.logaddexp(0.0, m),
        beta1=_sigmoid,
        beta2=lambda m: _sigmoid(m) * (1.0 - _sigmoid(m)),
        carrier_sampler=_sample,
    )


def logistic_location_family() -> GeneralFamilySpec:
    """Logistic location family, the built-in non-exponential model.

    Log density ``-(x - m) - 2 log(1 + exp(-(x - m)))``; the score is
    ``tanh((x - m) / 2)`` and the Fisher information is 1/3.
    """

    def log_density(x: np.ndarray, m: np.ndarray) -> np.ndarray:
        u = np.asarray(x, dtype=float) - m
        return -u - 2.0 * np.logaddexp(0.0, -u)

    def score(x: np.ndarray, m: np.ndarray) -> np.ndarray:
        return np.tanh((np.asarray(x, dtype=float) - m) / 2.0)

    def second(x: np.ndarray, m: np.ndarray) -> np.ndarray:
        u = np.asarray(x, dtype=float) - m
        return -0.5 / np.square(np.cosh(u / 2.0))

    return GeneralFamilySpec(
        name="logistic",
        log_density=log_density,
        score=score,
        second=second,
        fisher=lambda m: 1.0 / 3.0,
        sampler=lambda rng, m, size: rng.logistic(loc=m, scale=1.0, size=size),
    )


_BUILTIN_EXP = {
    "normal": normal_family,
    "poisson": poisson_family,
    "bernoulli": bernoulli_logit_family,
}


def family_by_name(name: str) -> ExpFamilySpec | GeneralFamilySpec:
    if name in _BUILTIN_EXP:
        return _BUILTIN_EXP[name]()
    if name == "logistic":
        return logistic_location_family()
    raise ValueError(f"unknown family {name!r}")


def _sigmoid(m: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(np.asarray(m, dtype=float) / 2.0))


# --------------------------------------------------------------------- #
# Sampling and likelihood ratios
# --------------------------------------------------------------------- #


def sample_model(
    family: ExpFamilySpec | GeneralFamilySpec,
    m: MeanVector,
    seed: int | np.random.Generator,
    reps: int | None = None,
) -> np.ndarray:
    """Draw independent coordinates, coordinate ``i`` under parameter ``m_i``.

    Returns shape ``(n,)``, or ``(reps, n)`` when ``reps`` is given.
    """
    rng = as_generator(seed, TAG_MODEL)
    size = (m.n,) if reps is None else (reps, m.n)
    sampler = family.carrier_sampler if isinstance(family, ExpFamilySpec) else family.sampler
    return sampler(rng, m.entries, size)


def loglik_ratio(
    family: ExpFamilySpec | GeneralFamilySpec,
    m: MeanVector,
    mbar: float,
    x: np.ndarray,
) -> float | np.ndarray:
    """Exact log of ``prod f(x_i; m_i) / prod f(x_i; mbar)``.

    ``x`` may be a single vector ``(n,)`` or a batch ``(reps, n)``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m.n:
        raise ValueError("dimension mismatch between m and x")
    if isinstance(family, ExpFamilySpec):
        bm = family.beta(m.entries)
        bbar = family.beta(np.float64(mbar))
        if not (np.all(np.isfinite(bm)) and np.isfinite(bbar)):
            raise ValueError("non-finite cumulant values")
        out = x @ (m.entries - mbar) - float(np.sum(bm - bbar))
    else:
        out = np.sum(
            family.log_density(x, m.entries) - family.log_density(x, mbar), axis=-1
        )
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ContiguityDiagnostics:
    """Null mean/variance of the log-likelihood ratio and their common bound."""

    null_mean: float
    null_var: float
    alpha: float
    bound: float

    @property
    def within_bound(self) -> bool:
        tol = 1e-9 * (1.0 + self.bound)
        return abs(self.null_mean) <= self.bound + tol and self.null_var <= self.bound + tol


def contiguity_diagnostics(
    family: ExpFamilySpec | GeneralFamilySpec, m: MeanVector
) -> ContiguityDiagnostics:
    """Null mean and variance of the log-likelihood ratio of ``m`` to its mean.

    Both are dominated by ``alpha * ||m - mbar||^2`` where ``alpha`` is the
    numerical sup of the variance function (or of the Kullback/variance
    functionals, for non-exponential families) over the compact box.
    """
    mbar = m.mean
    lo = m.compact_lo if m.compact_lo is not None else float(m.entries.min())
    hi = m.compact_hi if m.compact_hi is not None else float(m.entries.max())
    delta_sq = m.centered_norm**2
    if isinstance(family, ExpFamilySpec):
        null_mean = -float(np.sum(family.beta(m.entries) - family.beta(np.float64(mbar))))
        null_var = float(delta_sq * family.beta2(np.float64(mbar)))
        alpha = family.beta2_sup(lo, hi)
    else:
        means, variances = _general_loglik_moments(family, m.entries, mbar)
        null_mean = float(means.sum())
        null_var = float(variances.sum())
        alpha = _general_alpha(family, lo, hi)
    return ContiguityDiagnostics(
        null_mean=null_mean,
        null_var=null_var,
        alpha=alpha,
        bound=alpha * delta_sq,
    )


def _general_loglik_moments(
    family: GeneralFamilySpec, entries: np.ndarray, mbar: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate null mean/variance of ``log f(X; m_i) - log f(X; mbar)``."""
    span = 45.0
    xs = np.linspace(mbar - span, mbar + span, 8193)
    w = np.exp(family.log_density(xs, mbar))
    means = np.empty(entries.size)
    variances = np.empty(entries.size)
    for i, mi in enumerate(entries):
        diff = family.log_density(xs, mi) - family.log_density(xs, mbar)
        mu = simpson(diff * w, x=xs)
        means[i] = mu
        variances[i] = simpson((diff - mu) ** 2 * w, x=xs)
    return means, variances


def _general_alpha(family: GeneralFamilySpec, lo: float, hi: float, grid: int = 9) -> float:
    """Numerical sup of |mean| and variance of the pairwise log ratio over the box.

    The variance ratio tends to the Fisher information as the pair collapses,
    so the Fisher sup is folded in alongside the finite-separation grid pairs.
    """
    points = np.linspace(lo, hi, grid)
    worst = float(max(family.fisher(float(t)) for t in points))
    for m0 in points:
        targets = points[np.abs(points - m0) > 1e-9]
        means, variances = _general_loglik_moments(family, targets, float(m0))
        gaps = (targets - m0) ** 2
        worst = max(worst, float(np.max(np.abs(means) / gaps)), float(np.max(variances / gaps)))
    return worst


def sample_neyman_scott(
    layout: NeymanScottLayout,
    m: MeanVector,
    seed: int | np.random.Generator,
    reps: int | None = None,
) -> np.ndarray:
    """Draw the ``n x nu`` replicate table, row ``i`` centered at ``m_i``."""
    if m.n != layout.n:
        raise ValueError("mean vector length must match the number of groups")
    rng = as_generator(seed, TAG_MODEL)
    size = (layout.n, layout.nu) if reps is None else (reps, layout.n, layout.nu)
    return rng.normal(loc=m.entries[..., :, None], scale=layout.sigma, size=size)


# --------------------------------------------------------------------- #
# Spacings
# --------------------------------------------------------------------- #


def sample_spacings_null(n: int, seed: int | np.random.Generator) -> SpacingsSample:
    """Null spacings: ``n + 1`` iid standard exponentials divided by their sum."""
    return SpacingsSample(sample_spacings_null_batch(n, 1, seed)[0])


def sample_spacings_null_batch(
    n: int, reps: int, seed: int | np.random.Generator
) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(seed, TAG_SPACINGS)
    e = rng.exponential(1.0, size=(reps, n + 1))
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class Profile:
    """A bounded mean-zero profile on [0, 1] used as a spacings alternative.

    Built from a finite cosine combination ``sum_k c_k * sqrt(2) cos(2 pi k x)``
    via :func:`cosine_profile`, or from any callable via :func:`profile_from_callable`
    (sup and integrals then estimated on a fine grid).
    """

    fn: Callable[[np.ndarray], np.ndarray]
    sup: float
    l2_norm_sq: float
    label: str = "h"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.fn(x)


def cosine_profile(coeffs: dict[int, float], label: str | None = None) -> Profile:
    """Mean-zero profile ``sum_k c_k * sqrt(2) cos(2 pi k x)`` (orthonormal terms)."""
    if not coeffs or any(k < 1 for k in coeffs):
        raise ValueError("coeffs must map frequencies >= 1 to weights")
    items = sorted(coeffs.items())

    def fn(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k, c in items:
            out = out + c * np.sqrt(2.0) * np.cos(2.0 * np.pi * k * x)
        return out

    sup = float(sum(abs(c) for _, c in items) * np.sqrt(2.0))
    l2 = float(sum(c * c for _, c in items))
    if label is None:
        label = "+".join(f"{c:g}*cos{k}" for k, c in items)
    return Profile(fn=fn, sup=sup, l2_norm_sq=l2, label=label)


def profile_from_callable(fn: Callable[[np.ndarray], np.ndarray], label: str = "h") -> Profile:
    """Wrap an arbitrary callable; sup and L2 norm estimated on a fine grid."""
    xs = np.linspace(0.0, 1.0, _PROFILE_GRID)
    vals = np.asarray(fn(xs), dtype=float)
    mean = simpson(vals, x=xs)
    if abs(mean) > 1e-6:
        raise ValueError("profile must integrate to 0 within 1e-6")
    return Profile(
        fn=fn,
        sup=float(np.abs(vals).max()),
        l2_norm_sq=float(simpson(vals**2, x=xs)),
        label=label,
    )


def _as_profile(h: Profile | Callable[[np.ndarray], np.ndarray]) -> Profile:
    return h if isinstance(h, Profile) else profile_from_callable(h)


def sample_spacings_alternative(
    n: int, h: Profile | Callable, seed: int | np.random.Generator
) -> SpacingsSample:
    """Spacings of ``n`` ordered draws from the density ``1 + h(x) / sqrt(n)``."""
    return SpacingsSample(sample_spacings_alternative_batch(n, h, 1, seed)[0])


def sample_spacings_alternative_batch(
    n: int, h: Profile | Callable, reps: int, seed: int | np.random.Generator
) -> np.ndarray:
    """Batch version of :func:`sample_spacings_alternative`; shape ``(reps, n + 1)``.

    Rejection sampling with the constant envelope ``1 + sup|h| / sqrt(n)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    prof = _as_profile(h)
    root_n = np.sqrt(n)
    if prof.sup > 0.99 * root_n:
        raise ValueError("sup|h| must be <= 0.99 * sqrt(n) to keep the density positive")
    xs = np.linspace(0.0, 1.0, _PROFILE_GRID)
    if abs(simpson(np.asarray(prof(xs), float), x=xs)) > 1e-6:
        raise ValueError("h must integrate to 0 within 1e-6")
    rng = as_generator(seed, TAG_SPACINGS)
    envelope = 1.0 + prof.sup / root_n
    need = reps * n
    accepted: list[np.ndarray] = []
    got = 0
    while got < need:
        k = max(int(1.2 * (need - got) * envelope), 1024)
        u = rng.random(k)
        keep = rng.random(k) * envelope <= 1.0 + prof(u) / root_n
        take = u[keep]
        accepted.append(take)
        got += take.size
    pts = np.concatenate(accepted)[:need].reshape(reps, n)
    pts.sort(axis=1)
    padded = np.concatenate(
        [np.zeros((reps, 1)), pts, np.ones((reps, 1))], axis=1
    )
    return np.diff(padded, axis=1)


def profile_at_grid(h: Profile | Callable, n: int) -> np.ndarray:
    """Profile values ``h(i / (n + 1))`` for ``i = 1 .. n + 1``."""
    prof = _as_profile(h)
    i = np.arange(1, n + 2, dtype=float)
    return np.asarray(prof(i / (n + 1)), dtype=float)


def profile_l2_norm_sq(h: Profile | Callable) -> float:
    """``integral of h^2`` by 1024-interval composite quadrature."""
    prof = _as_profile(h)
    xs = np.linspace(0.0, 1.0, _HSQ_INTERVALS + 1)
    return float(simpson(np.asarray(prof(xs), float) ** 2, x=xs))


def spacings_loglik_approx(
    h: Profile | Callable, d: SpacingsSample | np.ndarray
) -> float | np.ndarray:
    """Linear spacings approximation to the log-likelihood ratio.

    ``sum_i h(i/(n+1)) (d_i - 1/(n+1)) - integral(h^2)/2``, with the profile
    evaluated at the expected order-statistic positions.
    """
    dv = d.d if isinstance(d, SpacingsSample) else np.asarray(d, dtype=float)
    n = dv.shape[-1] - 1
    hi = profile_at_grid(h, n)
    out = (dv - 1.0 / (n + 1)) @ hi - 0.5 * profile_l2_norm_sq(h)
    return float(out) if np.ndim(out) == 0 else out


def spacings_loglik_exact(
    h: Profile | Callable, d: SpacingsSample | np.ndarray
) -> float | np.ndarray:
    """Exact log-likelihood ratio of the density ``1 + h/sqrt(n)`` to uniform."""
    dv = d.d if isinstance(d, SpacingsSample) else np.asarray(d, dtype=float)
    n = dv.shape[-1] - 1
    prof = _as_profile(h)
    points = np.cumsum(dv, axis=-1)[..., :-1]
    out = np.sum(np.log1p(prof(points) / np.sqrt(n)), axis=-1)
    return float(out) if np.ndim(out) == 0 else out
