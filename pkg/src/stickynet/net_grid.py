"""Lattice branching-coalescing walk approximation of the net.

Space step eps, time step eps**2 and branch probability branch_coeff * eps
give the diffusive scaling under which the walk family approximates the
continuum object with -1/+1 drifts.  Each lattice site carries a left, a
right or a branching (both) arrow; paths follow arrows, the point-set
process is the reachable set, and dyadic covering flags restart extremal
paths exactly as in the interval-covering constructions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .rng import as_generator

LEFT = 0
RIGHT = 1
BOTH = 2

_MAX_FIELD_BYTES = 1 << 31


@dataclass(frozen=True)
class NetConfig:
    eps: float
    horizon: float
    width: float
    branch_coeff: float = 1.0

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if self.branch_prob >= 1:
            raise ValueError("branch probability branch_coeff * eps must be < 1")
        if self.horizon <= 0 or self.width <= 0:
            raise ValueError("horizon and width must be positive")

    @property
    def branch_prob(self) -> float:
        return self.branch_coeff * self.eps

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.eps**2))

    @property
    def half_width(self) -> int:
        return int(round(self.width / self.eps))

    @property
    def n_sites(self) -> int:
        return 2 * self.half_width + 1


class CapacityError(MemoryError):
    pass


@dataclass
class ArrowField:
    """Per-site arrow codes, shape (n_steps, n_sites); positions are
    site_index - half_width in lattice units."""

    config: NetConfig
    arrows: np.ndarray

    def arrow(self, pos: int, step: int) -> int:
        return int(self.arrows[step, pos + self.config.half_width])


@dataclass(frozen=True)
class PointSet:
    t: float
    positions: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.positions) <= 0):
            raise ValueError("positions must be strictly increasing")


@dataclass
class SpecialTimeFlags:
    grid: "object"
    level: int
    flagged: np.ndarray
    kind: str

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.flagged))


def generate_arrows(config: NetConfig, seed) -> ArrowField:
    """Materialize the arrow configuration, deterministic in the seed."""
    n_bytes = config.n_steps * config.n_sites
    if n_bytes > _MAX_FIELD_BYTES:
        raise CapacityError(
            f"field of {config.n_steps} x {config.n_sites} sites needs "
            f"{n_bytes} bytes, budget is {_MAX_FIELD_BYTES}"
        )
    rng = as_generator(seed)
    u = rng.random((config.n_steps, config.n_sites))
    p = config.branch_prob
    arrows = np.where(u < p, BOTH, np.where(u < p + (1.0 - p) / 2.0, LEFT, RIGHT))
    return ArrowField(config=config, arrows=arrows.astype(np.int8))


def _reflect(pos: np.ndarray, half_width: int) -> np.ndarray:
    # reflecting boundary preserves the space-time parity
    pos = np.where(pos > half_width, 2 * half_width - pos, pos)
    return np.where(pos < -half_width, -2 * half_width - pos, pos)


def reachable_set(field: ArrowField, starts, n_steps: int) -> PointSet:
    """Positions reachable from the start sites after n_steps hops."""
    starts = np.atleast_1d(np.asarray(starts, dtype=int))
    if len(starts) == 0:
        raise ValueError("start set must be nonempty")
    hw = field.config.half_width
    if np.any(np.abs(starts) > hw):
        raise ValueError("start sites outside the lattice width")
    occupied = np.zeros(field.config.n_sites, dtype=bool)
    occupied[starts + hw] = True
    for m in range(n_steps):
        arr = field.arrows[m]
        go_left = occupied & (arr != RIGHT)
        go_right = occupied & (arr != LEFT)
        nxt = np.zeros_like(occupied)
        # left moves from site i land on i - 1; boundary reflects inward
        nxt[:-1] |= go_left[1:]
        nxt[1] |= go_left[0]
        nxt[1:] |= go_right[:-1]
        nxt[-2] |= go_right[-1]
        occupied = nxt
    positions = np.flatnonzero(occupied) - hw
    return PointSet(t=n_steps * field.config.eps**2, positions=positions)


def _follow(field: ArrowField, pos: int, start_step: int, n_steps: int, leftmost: bool):
    hw = field.config.half_width
    trace = np.empty(n_steps + 1, dtype=int)
    trace[0] = pos
    for k in range(n_steps):
        arr = field.arrows[start_step + k, pos + hw]
        if leftmost:
            pos = pos - 1 if arr != RIGHT else pos + 1
        else:
            pos = pos + 1 if arr != LEFT else pos - 1
        if pos > hw:
            pos = 2 * hw - pos
        elif pos < -hw:
            pos = -2 * hw - pos
        trace[k + 1] = pos
    return trace


def leftmost_path(field: ArrowField, z: int, start_step: int = 0, n_steps: int | None = None):
    """Positions of the extremal left path from site z, one entry per step."""
    if n_steps is None:
        n_steps = field.config.n_steps - start_step
    return _follow(field, z, start_step, n_steps, leftmost=True)


def rightmost_path(field: ArrowField, z: int, start_step: int = 0, n_steps: int | None = None):
    if n_steps is None:
        n_steps = field.config.n_steps - start_step
    return _follow(field, z, start_step, n_steps, leftmost=False)


def _grid_steps(field: ArrowField, grid, level: int) -> np.ndarray:
    """Lattice step index of each dyadic time, or raise if misaligned."""
    dt_lattice = field.config.eps**2
    steps = np.empty(2**level + 1, dtype=int)
    for j in range(2**level + 1):
        t = grid.time(level, j)
        s = t / dt_lattice
        if abs(s - round(s)) > 1e-9:
            raise ValueError(
                f"dyadic time {t} at level {level} is not a lattice multiple of {dt_lattice}"
            )
        steps[j] = int(round(s))
    if steps[-1] > field.config.n_steps:
        raise ValueError("grid extends past the simulated horizon")
    return steps


def covering_flags_j1(field: ArrowField, l_path: np.ndarray, grid, level: int) -> SpecialTimeFlags:
    """Flag level-`level` intervals where a rightmost path restarted on the
    reference left path one dyadic step earlier sits strictly to its right."""
    steps = _grid_steps(field, grid, level)
    flagged = np.zeros(2**level, dtype=bool)
    for j in range(1, 2**level):
        s_prev, s_now = steps[j - 1], steps[j]
        r = _follow(field, int(l_path[s_prev]), s_prev, s_now - s_prev, leftmost=False)
        flagged[j] = r[-1] > l_path[s_now]
    return SpecialTimeFlags(grid=grid, level=level, flagged=flagged, kind="J1")


def covering_flags_j3(field: ArrowField, pi_path: np.ndarray, grid, level: int) -> SpecialTimeFlags:
    """Same as J1 but restarting both extremal paths on a net path and
    flagging when they have separated by the next dyadic time."""
    steps = _grid_steps(field, grid, level)
    flagged = np.zeros(2**level, dtype=bool)
    for j in range(1, 2**level):
        s_prev, s_now = steps[j - 1], steps[j]
        z = int(pi_path[s_prev])
        n = s_now - s_prev
        l = _follow(field, z, s_prev, n, leftmost=True)
        r = _follow(field, z, s_prev, n, leftmost=False)
        flagged[j] = l[-1] < r[-1]
    return SpecialTimeFlags(grid=grid, level=level, flagged=flagged, kind="J3")


def gap_statistics(ps: PointSet, bins: int = 20):
    """Minimum nearest-neighbour gap (lattice units) and gap histogram."""
    if len(ps.positions) < 2:
        raise ValueError("gap statistics need at least two points")
    gaps = np.diff(ps.positions)
    hist = np.histogram(gaps, bins=bins)
    return int(gaps.min()), hist


CLUSTER_GAP_THRESHOLD = 2  # lattice units; reported, never baked into results


def export_run(
    field: ArrowField,
    starts,
    grid,
    level: int,
    path,
) -> list[dict]:
    """One row per lattice step: reachable count, min gap and covering flags.

    Flags are attached to the steps inside their dyadic interval.
    """
    cfg = field.config
    hw = cfg.half_width
    steps = _grid_steps(field, grid, level)
    l_ref = leftmost_path(field, int(np.atleast_1d(starts)[0]))
    j1 = covering_flags_j1(field, l_ref, grid, level)
    j3 = covering_flags_j3(field, l_ref, grid, level)

    occupied = np.zeros(cfg.n_sites, dtype=bool)
    occupied[np.atleast_1d(np.asarray(starts, dtype=int)) + hw] = True
    rows = []
    interval = np.searchsorted(steps, np.arange(cfg.n_steps + 1), side="right") - 1
    for m in range(cfg.n_steps + 1):
        positions = np.flatnonzero(occupied) - hw
        gaps = np.diff(positions)
        jdx = min(int(interval[m]), 2**level - 1)
        rows.append(
            {
                "step": m,
                "position_count": len(positions),
                "min_gap": int(gaps.min()) if len(gaps) else -1,
                "flagged_j1": int(j1.flagged[jdx]),
                "flagged_j3": int(j3.flagged[jdx]),
            }
        )
        if m < cfg.n_steps:
            arr = field.arrows[m]
            go_left = occupied & (arr != RIGHT)
            go_right = occupied & (arr != LEFT)
            nxt = np.zeros_like(occupied)
            nxt[:-1] |= go_left[1:]
            nxt[1] |= go_left[0]
            nxt[1:] |= go_right[:-1]
            nxt[-2] |= go_right[-1]
            occupied = nxt
    if path is not None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return rows


def enumerate_hopping_paths(field: ArrowField, starts, n_steps: int) -> PointSet:
    """Brute-force oracle: endpoints of every arrow-following hopping path.

    Exponential in n_steps; intended for lattices of a dozen steps at most.
    """
    hw = field.config.half_width
    endpoints = set()

    def walk(pos: int, step: int):
        if step == n_steps:
            endpoints.add(pos)
            return
        arr = field.arrows[step, pos + hw]
        moves = []
        if arr != RIGHT:
            moves.append(pos - 1)
        if arr != LEFT:
            moves.append(pos + 1)
        for nxt in moves:
            if nxt > hw:
                nxt = 2 * hw - nxt
            elif nxt < -hw:
                nxt = -2 * hw - nxt
            walk(nxt, step + 1)

    for s in np.atleast_1d(np.asarray(starts, dtype=int)):
        walk(int(s), 0)
    return PointSet(t=n_steps * field.config.eps**2, positions=np.array(sorted(endpoints)))
