"""Permutation and bootstrap law machinery.

Empirical laws of the contrast ``m' P x`` under random permutations, of
its with-replacement (bootstrap) analogue, and of the fresh-draw target,
with the Wasserstein-type metric ``rho2`` and the Kolmogorov metric
``rho0``, characteristic functions, a with/without-replacement coupling
with the second-moment bound check, and the convergence sweeps tying
them together.

Coupling construction: both index samples are driven by one array of
iid uniforms U_i on the values of ``x`` sorted in increasing order.  The
without-replacement sample reads the value at the rank of U_i; the
with-replacement sample reads the value at position ``ceil(n U_i)``.
Ranks track ``n U_i`` within an empirical-process fluctuation, which is
what makes the weighted sums close for centered weights.  The spec'd
"maximal-prefix" fill (first occurrences kept, leftovers permuted) is
retained as ``method="first_occurrence"`` for comparison; it has correct
marginals but its gap second moment does not vanish with n.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .rng import (
    TAG_BOOT_LAW,
    TAG_COUPLING,
    TAG_IID_LAW,
    TAG_MODEL,
    TAG_PERM_LAW,
    as_generator,
    map_blocks,
)

#: Quantile-grid size for rho2 between unequal-size samples.
RHO2_QUANTILES = 2048

#: Batches used for replicate-level standard errors in sweeps.
SWEEP_BATCHES = 20


# --------------------------------------------------------------------- #
# Empirical laws and metrics
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class EmpiricalLaw:
    """A sorted sample standing in for the law of a real statistic."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.sort(np.asarray(self.values, dtype=float).ravel())
        if values.size == 0:
            raise ValueError("law must contain at least one value")
        if not np.all(np.isfinite(values)):
            raise ValueError("law values must be finite")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def second_moment(self) -> float:
        return float(np.mean(self.values**2))


def _law_values(a: EmpiricalLaw | np.ndarray) -> np.ndarray:
    if isinstance(a, EmpiricalLaw):
        return a.values
    v = np.sort(np.asarray(a, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("law must contain at least one value")
    return v


def rho2(
    a: EmpiricalLaw | np.ndarray,
    b: EmpiricalLaw | np.ndarray,
    quantiles: int = RHO2_QUANTILES,
) -> float:
    """Order-2 Wasserstein distance between two one-dimensional samples.

    Equal sizes use the exact sorted pairing; otherwise both laws are read
    at a common grid of ``quantiles`` midpoint quantile levels.
    """
    av, bv = _law_values(a), _law_values(b)
    if av.size == bv.size:
        return float(np.sqrt(np.mean((av - bv) ** 2)))
    q = (np.arange(quantiles) + 0.5) / quantiles
    aq = np.quantile(av, q)
    bq = np.quantile(bv, q)
    return float(np.sqrt(np.mean((aq - bq) ** 2)))


def rho0(a: EmpiricalLaw | np.ndarray, b: EmpiricalLaw | np.ndarray) -> float:
    """Kolmogorov (sup-CDF) distance between two empirical laws."""
    av, bv = _law_values(a), _law_values(b)
    grid = np.concatenate([av, bv])
    fa = np.searchsorted(av, grid, side="right") / av.size
    fb = np.searchsorted(bv, grid, side="right") / bv.size
    return float(np.max(np.abs(fa - fb)))


def char_fn(law: EmpiricalLaw | np.ndarray, t: float) -> complex:
    """Empirical characteristic function at ``t``."""
    v = _law_values(law)
    return complex(np.mean(np.exp(1j * t * v)))


def cf_inequality_check(
    w: np.ndarray, wprime: np.ndarray, t: float
) -> bool:
    """Check ``|cf(W,t) - cf(W',t)| <= t^2 E (W-W')^2 + |t| sqrt(E (W-W')^2)``.

    ``w`` and ``wprime`` must be paired (same replicate order); all three
    terms are empirical means over the pairs.  The inequality is a theorem,
    so a ``False`` here indicates a bug upstream.
    """
    w = np.asarray(w, dtype=float)
    wprime = np.asarray(wprime, dtype=float)
    if w.shape != wprime.shape:
        raise ValueError("paired samples must have identical shape")
    lhs = abs(np.mean(np.exp(1j * t * w)) - np.mean(np.exp(1j * t * wprime)))
    m2 = float(np.mean((w - wprime) ** 2))
    rhs = t * t * m2 + abs(t) * np.sqrt(m2)
    return bool(lhs <= rhs + 1e-12)


def uniform_integrability_probe(
    law: EmpiricalLaw | np.ndarray, t_grid: Sequence[float]
) -> np.ndarray:
    """Tail second-moment functional ``E[V^2 1(|V| >= t)]`` along ``t_grid``."""
    v = _law_values(law)
    return np.array(
        [float(np.mean(v * v * (np.abs(v) >= t))) for t in np.asarray(t_grid, float)]
    )


# --------------------------------------------------------------------- #
# Permutation and bootstrap laws
# --------------------------------------------------------------------- #


def perm_law_moments(m: np.ndarray, x: np.ndarray) -> tuple[float, float]:
    """Exact mean and variance of ``m' P x`` under a uniform permutation."""
    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    n = m.size
    if n < 2 or x.size != n:
        raise ValueError("need matching vectors of length >= 2")
    mean = n * m.mean() * x.mean()
    var = float(np.sum((m - m.mean()) ** 2) * np.sum((x - x.mean()) ** 2) / (n - 1))
    return float(mean), var


def sample_perm_law(
    m: np.ndarray,
    x: np.ndarray,
    reps: int,
    seed: int | np.random.Generator,
    workers: int = 1,
    stream: tuple[int, ...] = (),
) -> EmpiricalLaw:
    """``reps`` draws of ``m' P x`` over uniform random permutations."""
    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    if m.size != x.size:
        raise ValueError("m and x must have the same length")

    def block(b: int, count: int) -> np.ndarray:
        rng = _block_rng(seed, TAG_PERM_LAW, stream, b)
        idx = np.argsort(rng.random((count, m.size)), axis=1)
        return x[idx] @ m

    wk = 1 if isinstance(seed, np.random.Generator) else workers
    return EmpiricalLaw(np.concatenate(map_blocks(block, reps, workers=wk)))


def sample_boot_law(
    m: np.ndarray,
    x: np.ndarray,
    reps: int,
    seed: int | np.random.Generator,
    workers: int = 1,
    stream: tuple[int, ...] = (),
) -> EmpiricalLaw:
    """``reps`` draws of ``sum_i m_i x(J*_i)`` with iid uniform indices."""
    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    if m.size != x.size:
        raise ValueError("m and x must have the same length")

    def block(b: int, count: int) -> np.ndarray:
        rng = _block_rng(seed, TAG_BOOT_LAW, stream, b)
        idx = rng.integers(0, m.size, size=(count, m.size))
        return x[idx] @ m

    wk = 1 if isinstance(seed, np.random.Generator) else workers
    return EmpiricalLaw(np.concatenate(map_blocks(block, reps, workers=wk)))


def _block_rng(
    seed: int | np.random.Generator, tag: int, stream: tuple[int, ...], b: int
) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return as_generator(seed, tag, *stream, b)


# --------------------------------------------------------------------- #
# Coupling
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class CouplingDraw:
    """One joint draw of the without- and with-replacement weighted sums."""

    without_repl: float
    with_repl: float
    matched: int


@dataclass(frozen=True)
class CouplingResult:
    """Coupled draws plus the empirical second-moment bound check."""

    without_repl: np.ndarray
    with_repl: np.ndarray
    matched: np.ndarray
    s: float
    bound: float
    gap_sq_mean: float
    gap_sq_se: float

    @property
    def bound_holds(self) -> bool:
        return self.gap_sq_mean <= self.bound + 4.0 * self.gap_sq_se

    def draws(self) -> list[CouplingDraw]:
        return [
            CouplingDraw(float(w), float(wp), int(k))
            for w, wp, k in zip(self.without_repl, self.with_repl, self.matched)
        ]


def _coupled_block_rank(
    sorted_x: np.ndarray, m: np.ndarray, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = m.size
    u = rng.random((count, n))
    star = np.minimum((n * u).astype(np.intp), n - 1)
    ranks = np.argsort(np.argsort(u, axis=1), axis=1)
    without = sorted_x[ranks] @ m
    with_r = sorted_x[star] @ m
    matched = np.sum(ranks == star, axis=1)
    return without, with_r, matched


def _coupled_block_first_occurrence(
    x: np.ndarray, m: np.ndarray, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = m.size
    without = np.empty(count)
    with_r = np.empty(count)
    matched = np.empty(count, dtype=np.intp)
    all_idx = np.arange(n)
    for r in range(count):
        star = rng.integers(0, n, size=n)
        uniq, first = np.unique(star, return_index=True)
        keep = np.zeros(n, dtype=bool)
        keep[first] = True
        j = np.empty(n, dtype=np.intp)
        j[keep] = star[keep]
        unused = np.setdiff1d(all_idx, uniq, assume_unique=True)
        j[~keep] = rng.permutation(unused)
        without[r] = x[j] @ m
        with_r[r] = x[star] @ m
        matched[r] = int(np.sum(j == star))
    return without, with_r, matched


def hajek_coupling(
    m: np.ndarray,
    x: np.ndarray,
    reps: int,
    seed: int | np.random.Generator,
    method: str = "rank",
    workers: int = 1,
) -> CouplingResult:
    """Coupled draws of the contrast under sampling without and with replacement.

    Requires centered weights (``mean(m) = 0``).  The result records whether
    the empirical ``E (W - W')^2`` satisfies the theoretical bound
    ``3 s max|x_i - xbar| / sqrt(n - 1)`` up to 4 Monte Carlo standard errors.

    ``method="rank"`` (default) drives both samples by shared uniforms as
    described in the module docstring; ``method="first_occurrence"``
    implements the prefix-keeping fill, whose gap does not vanish.
    """
    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    n = m.size
    if x.size != n or n < 2:
        raise ValueError("need matching vectors of length >= 2")
    if abs(m.mean()) > 1e-10:
        raise ValueError("weights must be centered (mean zero)")
    if method not in ("rank", "first_occurrence"):
        raise ValueError(f"unknown coupling method {method!r}")
    sorted_x = np.sort(x)

    def block(b: int, count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rng = _block_rng(seed, TAG_COUPLING, (), b)
        if method == "rank":
            return _coupled_block_rank(sorted_x, m, count, rng)
        return _coupled_block_first_occurrence(x, m, count, rng)

    wk = 1 if isinstance(seed, np.random.Generator) else workers
    parts = map_blocks(block, reps, workers=wk)
    without = np.concatenate([p[0] for p in parts])
    with_r = np.concatenate([p[1] for p in parts])
    matched = np.concatenate([p[2] for p in parts])
    _, s_sq = perm_law_moments(m, x)
    s = float(np.sqrt(s_sq))
    bound = float(3.0 * s * np.max(np.abs(x - x.mean())) / np.sqrt(n - 1))
    gap_sq = (without - with_r) ** 2
    return CouplingResult(
        without_repl=without,
        with_repl=with_r,
        matched=matched,
        s=s,
        bound=bound,
        gap_sq_mean=float(gap_sq.mean()),
        gap_sq_se=float(gap_sq.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0,
    )


# --------------------------------------------------------------------- #
# Convergence sweeps
# --------------------------------------------------------------------- #


def _batched(values: np.ndarray, batches: int = SWEEP_BATCHES) -> list[np.ndarray]:
    batches = max(2, min(batches, values.size // 2))
    size = values.size // batches
    return [values[i * size : (i + 1) * size] for i in range(batches)]


def _distance_with_se(
    a: np.ndarray, b: np.ndarray, dist: Callable[[np.ndarray, np.ndarray], float]
) -> tuple[float, float]:
    full = dist(a, b)
    if a.size < 4:
        return float(full), 0.0
    batch_vals = [dist(ab, bb) for ab, bb in zip(_batched(a), _batched(b))]
    se = float(np.std(batch_vals, ddof=1) / np.sqrt(len(batch_vals)))
    return float(full), se


@dataclass(frozen=True)
class CltSweepRow:
    """One grid point of the permutation/bootstrap convergence sweep."""

    n: int
    rho2_perm_boot: float
    se_rho2_perm_boot: float
    rho2_boot_iid: float
    se_rho2_boot_iid: float
    rho2_perm_iid: float
    se_rho2_perm_iid: float
    diag_nmx: float


def theorem_convergence_sweep(
    null_sampler: Callable[[int, int, np.random.Generator], np.ndarray],
    m_builder: Callable[[int], np.ndarray],
    n_grid: Sequence[int],
    reps: int,
    seed: int,
    workers: int = 1,
) -> list[CltSweepRow]:
    """Distances between the permutation, bootstrap, and fresh-draw laws.

    ``null_sampler(n, reps, rng)`` draws null data (``reps=0`` returns a
    single vector as shape ``(1, n)``); ``m_builder(n)`` yields the centered
    contrast weights.  Per grid point: rho2 between each pair of laws, with
    batched standard errors, plus the diagnostic ``|n mbar xbar|``.
    """
    rows = []
    for gi, n in enumerate(n_grid):
        m = np.asarray(m_builder(int(n)), dtype=float)
        x = null_sampler(int(n), 1, as_generator(seed, TAG_MODEL, gi))[0]
        perm = sample_perm_law(m, x, reps, seed, workers=workers, stream=(gi,)).values
        boot = sample_boot_law(m, x, reps, seed, workers=workers, stream=(gi,)).values

        def iid_block(b: int, count: int, _n=int(n), _m=m, _gi=gi) -> np.ndarray:
            rng = as_generator(seed, TAG_IID_LAW, _gi, b)
            draws = null_sampler(_n, count, rng)
            return draws @ _m

        iid = np.concatenate(map_blocks(iid_block, reps, workers=workers))
        # Distances are computed on the unsorted replicate streams so the
        # batch split is over independent replicates.
        pb, pb_se = _distance_with_se(perm, boot, rho2)
        bi, bi_se = _distance_with_se(boot, iid, rho2)
        pi, pi_se = _distance_with_se(perm, iid, rho2)
        rows.append(
            CltSweepRow(
                n=int(n),
                rho2_perm_boot=pb,
                se_rho2_perm_boot=pb_se,
                rho2_boot_iid=bi,
                se_rho2_boot_iid=bi_se,
                rho2_perm_iid=pi,
                se_rho2_perm_iid=pi_se,
                diag_nmx=float(abs(n * m.mean() * x.mean())),
            )
        )
    return rows


def rho2_multivariate(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean combination of coordinatewise quantile distances.

    Practical surrogate for the multivariate Wasserstein metric; exact
    optimal transport is out of scope.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("coordinate counts must match")
    return float(np.sqrt(sum(rho2(a[:, j], b[:, j]) ** 2 for j in range(a.shape[1]))))


@dataclass(frozen=True)
class CltMatrixSweepRow:
    n: int
    rho2_perm_boot: float
    se_rho2_perm_boot: float
    rho2_boot_iid: float
    se_rho2_boot_iid: float
    rho2_perm_iid: float
    se_rho2_perm_iid: float


def theorem_convergence_sweep_matrix(
    row_sampler: Callable[[int, int, np.random.Generator], np.ndarray],
    m_builder: Callable[[int], np.ndarray],
    n_grid: Sequence[int],
    reps: int,
    seed: int,
    workers: int = 1,
) -> list[CltMatrixSweepRow]:
    """Multivariate (column-wise contrast) version of the convergence sweep.

    ``row_sampler(n, reps, rng)`` draws ``(reps, n, pi)`` arrays of iid rows;
    ``m_builder(n)`` yields an ``n x pi`` weight matrix with centered columns.
    The permutation law applies one shared row permutation to every column.
    """
    rows = []
    for gi, n in enumerate(n_grid):
        mm = np.asarray(m_builder(int(n)), dtype=float)
        x = row_sampler(int(n), 1, as_generator(seed, TAG_MODEL, gi))[0]
        pi_dim = mm.shape[1]

        def perm_block(b: int, count: int) -> np.ndarray:
            rng = as_generator(seed, TAG_PERM_LAW, gi, b)
            idx = np.argsort(rng.random((count, mm.shape[0])), axis=1)
            return np.einsum("rnj,nj->rj", x[idx], mm)

        def boot_block(b: int, count: int) -> np.ndarray:
            rng = as_generator(seed, TAG_BOOT_LAW, gi, b)
            idx = rng.integers(0, mm.shape[0], size=(count, mm.shape[0]))
            return np.einsum("rnj,nj->rj", x[idx], mm)

        def iid_block(b: int, count: int) -> np.ndarray:
            rng = as_generator(seed, TAG_IID_LAW, gi, b)
            draws = row_sampler(int(n), count, rng)
            return np.einsum("rnj,nj->rj", draws, mm)

        perm = np.concatenate(map_blocks(perm_block, reps, workers=workers))
        boot = np.concatenate(map_blocks(boot_block, reps, workers=workers))
        iid = np.concatenate(map_blocks(iid_block, reps, workers=workers))
        pb, pb_se = _distance_with_se_rows(perm, boot)
        bi, bi_se = _distance_with_se_rows(boot, iid)
        pi, pi_se = _distance_with_se_rows(perm, iid)
        rows.append(
            CltMatrixSweepRow(
                n=int(n),
                rho2_perm_boot=pb,
                se_rho2_perm_boot=pb_se,
                rho2_boot_iid=bi,
                se_rho2_boot_iid=bi_se,
                rho2_perm_iid=pi,
                se_rho2_perm_iid=pi_se,
            )
        )
    return rows


def _distance_with_se_rows(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    full = rho2_multivariate(a, b)
    size = a.shape[0] // SWEEP_BATCHES
    batch_vals = [
        rho2_multivariate(a[i * size : (i + 1) * size], b[i * size : (i + 1) * size])
        for i in range(SWEEP_BATCHES)
    ]
    se = float(np.std(batch_vals, ddof=1) / np.sqrt(len(batch_vals)))
    return full, se
