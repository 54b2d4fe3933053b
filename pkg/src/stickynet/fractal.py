"""Limsup-fractal machinery: dyadic flag families, level probabilities and
their square-root scaling, the variance bound, box counting, and the exact
dyadic separation construction.

An interval at level n is flagged when the gap process restarted from zero
one dyadic step earlier lands in the (2^-n, 2^(-n/4)) window and then stays
inside (2^-n, 1/n) for the whole interval.  The flag probability p_n decays
like sqrt(2^-n), which box counting picks up as a slope-1/2 signature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from . import analytic, sampler
from .analytic import SQRT2
from .rng import SeedSpec, as_generator

PHASE2_SUBSTEPS = 64


@dataclass(frozen=True)
class DyadicGrid:
    """Dyadic subdivision times of [a, b]; level k splits it into 2^k cells."""

    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"need b > a, got [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a

    def time(self, k: int, j: int) -> float:
        return self.a + self.length * j * 2.0**-k

    def cell_width(self, n: int) -> float:
        return self.length * 2.0**-n

    def level_times(self, k: int) -> np.ndarray:
        return self.a + self.length * np.arange(2**k + 1) * 2.0**-k


@dataclass
class FlagTable:
    """Per-level Bernoulli flags on the dyadic cells of a grid."""

    grid: DyadicGrid
    levels: dict = field(default_factory=dict)

    def set_level(self, k: int, flags: np.ndarray) -> None:
        flags = np.asarray(flags, dtype=bool)
        if len(flags) != 2**k:
            raise ValueError(f"level {k} needs {2**k} flags, got {len(flags)}")
        self.levels[k] = flags

    def count(self, k: int) -> int:
        return int(np.count_nonzero(self.levels[k]))

    def m_count(self, m: int, j: int, n: int) -> int:
        """Number of flagged level-n cells inside cell j of level m."""
        if n not in self.levels:
            raise KeyError(f"level {n} not populated")
        width = 2 ** (n - m)
        return int(np.count_nonzero(self.levels[n][j * width : (j + 1) * width]))

    def cover_set(self, k: int) -> np.ndarray:
        """Union of flagged level-k cells, as an (n_cells, 2) array of times."""
        idx = np.flatnonzero(self.levels[k])
        times = self.grid.level_times(k)
        return np.column_stack((times[idx], times[idx + 1]))


@dataclass(frozen=True)
class PnEstimate:
    n: int
    reps: int
    p_hat: float
    stderr: float

    @property
    def ratio(self) -> float:
        """p_hat * 2^(n/2); asymptotically constant under the scaling law."""
        return self.p_hat * 2.0 ** (self.n / 2.0)


def _window(n: int) -> tuple[float, float]:
    if n < 2:
        raise ValueError(f"level must be at least 2, got {n}")
    return 2.0**-n, 2.0 ** (-n / 4.0)


def z_indicators(n: int, grid: DyadicGrid, reps: int, seed) -> np.ndarray:
    """Vectorized flag draws for level-n cells (each draw independent)."""
    lo, hi = _window(n)
    rng = as_generator(seed)
    t_n = grid.cell_width(n)
    endpoint = sampler.sample_d_increments(0.0, t_n, reps, rng)
    accepted = (endpoint > lo) & (endpoint < hi)
    out = np.zeros(reps, dtype=bool)
    if np.any(accepted):
        survived = sampler.sample_exit_indicators(
            endpoint[accepted], lo, 1.0 / n, t_n, SQRT2, PHASE2_SUBSTEPS, rng
        )
        out[accepted] = survived
    return out


def z_indicator(n: int, grid: DyadicGrid, seed) -> int:
    """Single flag draw: window acceptance then corridor survival."""
    return int(z_indicators(n, grid, 1, seed)[0])


def analytic_pn(n: int, grid: DyadicGrid) -> float:
    """Quadrature of the zero-start density against the corridor survival
    probability over the acceptance window."""
    lo, hi = _window(n)
    t_n = grid.cell_width(n)

    def integrand(y):
        return analytic.pdf_zero(t_n, y) * analytic.exit_survival(t_n, y, lo, 1.0 / n, SQRT2)

    val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-10, limit=300)
    return val


_CHUNK = 1 << 17


def estimate_pn(n: int, reps: int, grid: DyadicGrid, seed) -> PnEstimate:
    """Monte Carlo flag probability with exact binomial standard error.

    Work is chunked over derived streams, so the result is identical for any
    execution order or worker count.
    """
    if reps < 1:
        raise ValueError("need at least one repetition")
    base = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    hits = 0
    done = 0
    chunk_id = 0
    while done < reps:
        size = min(_CHUNK, reps - done)
        hits += int(np.count_nonzero(z_indicators(n, grid, size, base.stream(chunk_id))))
        done += size
        chunk_id += 1
    p_hat = hits / reps
    return PnEstimate(
        n=n, reps=reps, p_hat=p_hat, stderr=math.sqrt(p_hat * (1.0 - p_hat) / reps)
    )


def variance_check(m: int, n: int, reps: int, grid: DyadicGrid, seed) -> dict:
    """Sample variance of the level-n flag count inside one level-m cell,
    against the p_n * 2^(n-m+1) bound (99% upper confidence limit).

    Flags within a repetition are drawn from one sequential stream; the
    restart-from-zero structure makes distinct cells independent here, which
    keeps the bound conservative.  A non-adjacent-cell correlation estimate
    is reported alongside.
    """
    if not m < n:
        raise ValueError(f"need m < n, got m={m}, n={n}")
    base = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    n_cells = 2 ** (n - m)
    counts = np.empty(reps)
    first = np.empty(reps, dtype=bool)
    third = np.empty(reps, dtype=bool)
    done = 0
    chunk_id = 0
    p_hits = 0
    while done < reps:
        size = min(max(_CHUNK // n_cells, 1), reps - done)
        z = z_indicators(n, grid, size * n_cells, base.stream(chunk_id)).reshape(
            size, n_cells
        )
        counts[done : done + size] = z.sum(axis=1)
        first[done : done + size] = z[:, 0]
        third[done : done + size] = z[:, min(2, n_cells - 1)]
        p_hits += int(z.sum())
        done += size
        chunk_id += 1
    p_hat = p_hits / (reps * n_cells)
    p_stderr = math.sqrt(p_hat * (1.0 - p_hat) / (reps * n_cells))
    sample_var = float(np.var(counts, ddof=1))
    # chi-square upper confidence limit for the variance
    var_ucl = sample_var * (reps - 1) / stats.chi2.ppf(0.01, reps - 1)
    bound = p_hat * 2.0 ** (n - m + 1)
    bound_ucl = (p_hat + 3.0 * p_stderr) * 2.0 ** (n - m + 1)
    rho = float(np.corrcoef(first, third)[0, 1]) if n_cells >= 3 else 0.0
    return {
        "m": m,
        "n": n,
        "reps": reps,
        "p_hat": p_hat,
        "p_stderr": p_stderr,
        "sample_var": sample_var,
        "var_ucl": var_ucl,
        "bound": bound,
        "bound_ucl": bound_ucl,
        "passed": var_ucl <= bound_ucl,
        "nonadjacent_corr": rho,
    }


def dyadic_separation(x1: float, x2: float, eps: float) -> tuple[int, int]:
    """Level M and index j with x1 in [t_M^{j-1}, t_M^j], x2 in [t_M^j, t_M^{j+1}]
    and 2^-M < 2*eps, via the binary-expansion construction on [0, 1].

    When x1 itself is dyadic at level M it lands in the cell closed on the
    right, matching the half-open expansion convention.
    """
    if not (0.0 <= x1 < x2 <= 1.0):
        raise ValueError(f"need 0 <= x1 < x2 <= 1, got {x1}, {x2}")
    if not x2 - x1 < eps:
        raise ValueError(f"need x2 - x1 < eps, got gap {x2 - x1} with eps {eps}")
    m1 = 1
    if x2 == 1.0:
        # the right endpoint reads as binary 0.111..., so the expansions
        # first differ once x1 falls at or below 1 - 2^-m
        while x1 > 1.0 - 2.0**-m1:
            m1 += 1
    else:
        while math.floor(x1 * 2**m1) == math.floor(x2 * 2**m1):
            m1 += 1
    m2 = 1
    while 2.0**-m2 >= 2.0 * eps:
        m2 += 1
    big = max(m1, m2)
    j1 = math.floor(x1 * 2**big)
    j2 = math.floor(x2 * 2**big)
    if x2 == 1.0:
        j2 = 2**big - 1
    if j2 == j1:
        # x1 sits exactly on the dyadic point separating the pair
        j = j1
    else:
        j = j2
    scale = 2.0**-big
    assert scale < 2.0 * eps
    assert (j - 1) * scale <= x1 <= j * scale
    assert j * scale <= x2 <= (j + 1) * scale
    return big, j


def z_flag_table(grid: DyadicGrid, k_min: int, k_max: int, seed) -> FlagTable:
    """Flag every cell at each level in [k_min, k_max] by independent draws."""
    base = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    table = FlagTable(grid=grid)
    for k in range(k_min, k_max + 1):
        table.set_level(k, z_indicators(k, grid, 2**k, base.stream(k)))
    return table


@dataclass(frozen=True)
class BoxCountFit:
    weighted_slope: float
    unweighted_slope: float
    levels: np.ndarray
    counts: np.ndarray

    @property
    def slope(self) -> float:
        return self.weighted_slope


def box_count_dimension(
    counts_by_level: "FlagTable | dict", k_min: int, k_max: int
) -> BoxCountFit:
    """Least-squares slope of log2 flag counts against the dyadic level.

    Empty levels are skipped with a warning; inverse-variance weights come
    from the binomial error of each count.
    """
    if not k_max > k_min >= 1:
        raise ValueError(f"need k_max > k_min >= 1, got [{k_min}, {k_max}]")
    levels, counts = [], []
    for k in range(k_min, k_max + 1):
        if isinstance(counts_by_level, FlagTable):
            c = counts_by_level.count(k)
        else:
            c = int(counts_by_level[k])
        if c == 0:
            import warnings

            warnings.warn(f"level {k} has no flags, skipping", stacklevel=2)
            continue
        levels.append(k)
        counts.append(c)
    if len(levels) < 2:
        raise ValueError("too few non-empty levels for a slope estimate")
    levels = np.array(levels, dtype=float)
    counts = np.array(counts, dtype=float)
    logc = np.log2(counts)
    # d(log2 c) ~ sigma_c / (c ln 2) with binomial sigma_c ~ sqrt(c)
    w = counts * math.log(2.0) ** 2

    def fit(weights):
        W = np.sum(weights)
        xm = np.sum(weights * levels) / W
        ym = np.sum(weights * logc) / W
        return float(
            np.sum(weights * (levels - xm) * (logc - ym))
            / np.sum(weights * (levels - xm) ** 2)
        )

    return BoxCountFit(
        weighted_slope=fit(w),
        unweighted_slope=fit(np.ones_like(w)),
        levels=levels.astype(int),
        counts=counts.astype(int),
    )


def limsup_set(table: FlagTable, n_start: int) -> np.ndarray:
    """Cells of the coarsest populated level >= n_start that meet the
    limsup set computed from the populated levels (direct definition)."""
    ks = sorted(k for k in table.levels if k >= n_start)
    if not ks:
        return np.zeros(0, dtype=bool)
    finest = ks[-1]
    union = np.zeros(2**finest, dtype=bool)
    for k in ks:
        width = 2 ** (finest - k)
        union |= np.repeat(table.levels[k], width)
    return union


def first_moment_sum(table: FlagTable, gamma: float, k_min: int) -> float:
    """Sum of |I|^gamma over flagged cells at all populated levels >= k_min."""
    total = 0.0
    for k, flags in table.levels.items():
        if k >= k_min:
            total += np.count_nonzero(flags) * table.grid.cell_width(k) ** gamma
    return total
