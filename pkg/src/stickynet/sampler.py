"""Samplers for the sticky gap process and the coupled left-right pair.

Increments of the gap process are drawn exactly from its mixed law by
inverse transform on a cached monotone spline of the continuous CDF; path
sampling goes through the positive-occupation time change.  All randomness
flows through SeedSpec streams so runs are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import analytic
from .analytic import SQRT2, StickyParams
from .rng import SeedSpec, as_generator

__all__ = [
    "SeedSpec",
    "SamplePath",
    "PairState",
    "stick_band",
    "sample_d_increment",
    "sample_d_increments",
    "sample_d_path_timechange",
    "euler_pair_step",
    "sample_exit_indicator",
    "sample_exit_indicators",
    "sample_running_max_at_exp",
    "sample_reflected_at_exp",
]

_X_CACHE_GRID = 1e-4
_PEAK_HALF_WIDTH = 14.0  # standard deviations covered by the dense CDF segment
_PEAK_KNOTS = 4097
_LEFT_KNOTS = 4097


@dataclass(frozen=True)
class SamplePath:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have equal length")
        if self.times[0] != 0.0:
            raise ValueError("paths start at time zero")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


@dataclass(frozen=True)
class PairState:
    l: float
    r: float
    met: bool = False

    def __post_init__(self):
        if self.met and self.l > self.r + 1e-12:
            raise ValueError("a met pair must keep l <= r")


def stick_band(dt: float) -> float:
    """Gap below which the pair is treated as together by the Euler scheme."""
    return math.sqrt(dt) / 10.0


def _cum_simpson(vals: np.ndarray, h: float) -> np.ndarray:
    """Cumulative integral of uniformly sampled values, Simpson order."""
    n = len(vals)
    out = np.zeros(n)
    pair = h / 3.0 * (vals[:-2:2] + 4.0 * vals[1:-1:2] + vals[2::2])
    out[2::2] = np.cumsum(pair)
    # odd points: quadratic through the three points ending there
    out[1] = h / 12.0 * (5.0 * vals[1] + 8.0 * vals[0] - vals[2])
    if n > 3:
        out[3::2] = out[2:-1:2] + h / 12.0 * (
            5.0 * vals[3::2] + 8.0 * vals[2:-1:2] - vals[1:-2:2]
        )
    return out


@lru_cache(maxsize=256)
def _increment_tables(x_key: int, dt: float):
    """Atom mass, total continuous mass and inverse-CDF spline for one (x, dt)."""
    x = x_key * _X_CACHE_GRID
    atom = analytic.atom_full(dt, x)
    sigma = math.sqrt(dt)
    center = x + SQRT2 * dt
    peak_lo = max(0.0, center - _PEAK_HALF_WIDTH * sigma)
    peak_hi = center + _PEAK_HALF_WIDTH * sigma

    segments = []
    if peak_lo > 0.0:
        segments.append(np.linspace(0.0, peak_lo, _LEFT_KNOTS))
    segments.append(np.linspace(peak_lo, peak_hi, _PEAK_KNOTS))

    y_all = [np.array([0.0])]
    c_all = [np.array([0.0])]
    offset = 0.0
    for seg in segments:
        vals = analytic.pdf_full(dt, x, seg)
        cum = _cum_simpson(vals, seg[1] - seg[0]) + offset
        offset = cum[-1]
        y_all.append(seg[1:])
        c_all.append(cum[1:])
    y = np.concatenate(y_all)
    c = np.concatenate(c_all)

    c = np.maximum.accumulate(c)
    keep = np.concatenate(([True], np.diff(c) > 0))
    inverse = PchipInterpolator(c[keep], y[keep], extrapolate=False)
    return atom, c[-1], inverse


def _tables_for(x: float, dt: float):
    if not dt > 0:
        raise ValueError(f"step must be positive, got {dt}")
    if x < 0:
        raise ValueError(f"start point must be nonnegative, got {x}")
    return _increment_tables(int(round(x / _X_CACHE_GRID)), float(dt))


def sample_d_increments(x: float, dt: float, size: int, seed) -> np.ndarray:
    """Exact draws from the mixed gap law after time dt started at x."""
    rng = as_generator(seed)
    atom, total_cont, inverse = _tables_for(x, dt)
    u = rng.random(size)
    out = np.zeros(size)
    cont = u >= atom
    if np.any(cont):
        c = (u[cont] - atom) / (1.0 - atom) * total_cont
        vals = inverse(np.clip(c, 0.0, total_cont))
        out[cont] = np.nan_to_num(np.maximum(vals, 0.0))
    return out


def sample_d_increment(x: float, dt: float, seed) -> float:
    return float(sample_d_increments(x, dt, 1, seed)[0])


def sample_d_path_timechange(
    horizon: float,
    grid_dt: float,
    params: StickyParams,
    seed,
) -> SamplePath:
    """Path of the sticky gap process via its positive-occupation clock.

    A reflected drifted motion is simulated on a clock grid of step
    grid_dt / 4, zero occupation is read off the Skorokhod term, and the
    path is resampled onto a uniform real-time grid.
    """
    if not horizon > 0 or not grid_dt > 0:
        raise ValueError("horizon and grid step must be positive")
    rng = as_generator(seed)
    tau_step = grid_dt / 4.0
    n_tau = int(math.ceil(horizon / tau_step)) + 1
    incr = params.mu * tau_step + math.sqrt(tau_step) * rng.standard_normal(n_tau)
    drifted = np.concatenate(([0.0], np.cumsum(incr)))
    m = -np.minimum.accumulate(np.minimum(drifted, 0.0))
    x = drifted + m
    real_t = tau_step * np.arange(n_tau + 1) + m / params.theta

    targets = np.arange(0.0, horizon + 0.5 * grid_dt, grid_dt)
    idx = np.clip(np.searchsorted(real_t, targets, side="right") - 1, 0, len(x) - 1)
    values = x[idx]
    # a target landing inside a real-time jump sits in a zero-occupation
    # stretch, where the process is stuck at the boundary
    stuck = targets - real_t[idx] > tau_step
    values = np.where(stuck, 0.0, values)
    return SamplePath(times=targets, values=values)


def euler_pair_step(state: PairState, dt: float, seed) -> PairState:
    """One hybrid Euler step of the left-right pair.

    Far apart the two walkers move with independent drivers and -/+ drifts;
    inside the sticky band the gap advances by an exact mixed-law increment
    and the midpoint by a Gaussian whose variance includes the expected zero
    occupation.
    """
    if not dt > 0:
        raise ValueError(f"step must be positive, got {dt}")
    rng = as_generator(seed)
    sdt = math.sqrt(dt)
    if not state.met:
        z1, z2 = rng.standard_normal(2)
        l2 = state.l - dt + sdt * z1
        r2 = state.r + dt + sdt * z2
        if l2 >= r2:
            mid = 0.5 * (l2 + r2)
            return PairState(mid, mid, met=True)
        return PairState(l2, r2, met=False)

    gap = (state.r - state.l) / SQRT2
    mid = 0.5 * (state.l + state.r)
    if gap >= stick_band(dt):
        z_gap, z_mid = rng.standard_normal(2)
        raw = gap + SQRT2 * dt + sdt * z_gap
        # bridge test against the boundary: on a zero hit the remainder of
        # the step is sticky, approximated by an exact draw over half a step
        hit = raw <= 0.0 or rng.random() < math.exp(-2.0 * gap * raw / dt)
        if hit:
            gap2 = sample_d_increment(0.0, dt / 2.0, rng)
            occupation = analytic.atom_zero(dt / 2.0) * dt / 2.0
            mid2 = mid + math.sqrt(dt / 2.0 + occupation / 2.0) * rng.standard_normal()
        else:
            gap2 = raw
            mid2 = mid + math.sqrt(dt / 2.0) * z_mid
    else:
        gap2 = sample_d_increment(gap, dt, rng)
        occupation = analytic.atom_full(dt, gap) * dt
        mid2 = mid + math.sqrt(dt / 2.0 + occupation / 2.0) * rng.standard_normal()
    half = gap2 / SQRT2
    return PairState(mid2 - half, mid2 + half, met=True)


def sample_exit_indicators(
    y0,
    lo: float,
    hi: float,
    t: float,
    drift: float,
    n_substeps: int,
    seed,
) -> np.ndarray:
    """Vectorized no-exit indicators with Brownian-bridge crossing correction.

    Returns a boolean array, True where the path stayed inside (lo, hi).
    """
    if lo >= hi:
        raise ValueError(f"barriers must satisfy lo < hi, got {lo} >= {hi}")
    rng = as_generator(seed)
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    x = y0.copy()
    alive = (x > lo) & (x < hi)
    dt = t / n_substeps
    for _ in range(n_substeps):
        z = rng.standard_normal(len(x))
        u = rng.random((2, len(x)))
        x_new = x + drift * dt + math.sqrt(dt) * z
        exited = (x_new <= lo) | (x_new >= hi)
        with np.errstate(over="ignore"):
            p_lo = np.exp(-2.0 * (x - lo) * (x_new - lo) / dt)
            p_hi = np.exp(-2.0 * (hi - x) * (hi - x_new) / dt)
        bridged = (u[0] < p_lo) | (u[1] < p_hi)
        alive &= ~(exited | bridged)
        x = x_new
    return alive


def sample_exit_indicator(
    y0: float, lo: float, hi: float, t: float, drift: float, n_substeps: int, seed
) -> bool:
    return bool(sample_exit_indicators(y0, lo, hi, t, drift, n_substeps, seed)[0])


def _invert_monotone(cdf, u: np.ndarray, hi_start: float = 1.0, iters: int = 50):
    """Vectorized bisection inverse of a scalar-family CDF evaluated on arrays."""
    hi = np.full(len(u), hi_start)
    for _ in range(200):
        need = cdf(hi) < u
        if not np.any(need):
            break
        hi[need] *= 2.0
    lo = np.zeros(len(u))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _ncdf(z):
    from scipy.special import erfc as _erfc

    return 0.5 * _erfc(-np.asarray(z) / SQRT2)


def _exp_ncdf_vec(c, z):
    """exp(c) * Phi(z) elementwise, stable for large |c| and deep tails."""
    from scipy.special import erfc as _erfc, erfcx as _erfcx

    c = np.asarray(c, dtype=float)
    z = np.asarray(z, dtype=float)
    u = -z / SQRT2
    tail = u > 0.0
    safe_u = np.where(tail, u, 0.0)
    with np.errstate(over="ignore"):
        out_tail = 0.5 * _erfcx(safe_u) * np.exp(c - safe_u * safe_u)
        out_bulk = 0.5 * np.exp(c) * _erfc(u)
    return np.where(tail, out_tail, out_bulk)


def sample_running_max_at_exp(mu: float, lam: float, size: int, seed) -> np.ndarray:
    """Running maximum of the drift-reversed driver at an independent Exp(lam)
    time, sampled exactly by inverting the fixed-time first-passage law."""
    rng = as_generator(seed)
    t = rng.exponential(1.0 / lam, size)
    st = np.sqrt(t)

    def cdf(y):
        hit = _ncdf((-y - mu * t) / st) + _exp_ncdf_vec(-2.0 * mu * y, (-y + mu * t) / st)
        return 1.0 - hit

    return _invert_monotone(cdf, rng.random(size))


def sample_reflected_at_exp(mu: float, lam: float, size: int, seed) -> np.ndarray:
    """Reflected drift-mu motion at an independent Exp(lam) time, sampled
    exactly by inverting its fixed-time CDF."""
    rng = as_generator(seed)
    t = rng.exponential(1.0 / lam, size)
    st = np.sqrt(t)

    def cdf(y):
        return _ncdf((y - mu * t) / st) - _exp_ncdf_vec(2.0 * mu * y, (-y - mu * t) / st)

    return _invert_monotone(cdf, rng.random(size))
