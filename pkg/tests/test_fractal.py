"""Flag-family machinery: level probabilities, square-root scaling, the
variance bound, box counting and the exact dyadic separation construction.
"""

import math

import numpy as np
import pytest

from stickynet import fractal
from stickynet.fractal import DyadicGrid, FlagTable
from stickynet.rng import SeedSpec

hypothesis = pytest.importorskip("hypothesis")
from hypothesis import given, settings, strategies as st


# ------------------------------------------------------------ dyadic grid

def test_grid_times():
    g = DyadicGrid(0.25, 1.25)
    assert g.length == 1.0
    assert g.time(3, 0) == 0.25
    assert g.time(3, 8) == 1.25
    assert g.cell_width(4) == pytest.approx(1.0 / 16)
    times = g.level_times(2)
    assert np.allclose(times, [0.25, 0.5, 0.75, 1.0, 1.25])
    with pytest.raises(ValueError):
        DyadicGrid(1.0, 1.0)


def test_flag_table_counts():
    t = FlagTable(grid=DyadicGrid())
    t.set_level(3, [1, 0, 0, 1, 1, 0, 0, 0])
    assert t.count(3) == 3
    assert t.m_count(1, 0, 3) == 2, "first half holds flags 1 and 3"
    assert t.m_count(1, 1, 3) == 1
    cover = t.cover_set(3)
    assert cover.shape == (3, 2)
    assert cover[0][0] == 0.0 and cover[0][1] == pytest.approx(0.125)
    with pytest.raises(ValueError):
        t.set_level(2, [1, 0, 0])
    with pytest.raises(KeyError):
        t.m_count(1, 0, 5)


# --------------------------------------------------------------- p_n laws

def test_analytic_pn_positive_and_window_guard():
    g = DyadicGrid()
    assert fractal.analytic_pn(6, g) > 0
    with pytest.raises(ValueError):
        fractal.z_indicators(1, g, 10, 0)


def test_analytic_pn_golden():
    assert fractal.analytic_pn(6, DyadicGrid()) == pytest.approx(
        0.005075876269706294, rel=1e-8
    )


def test_pn_scaling_ratio_converges():
    """p_n * 2^(n/2) settles at the limit constant once the corridor top
    1/n dominates the diffusive scale 2^(-n/2)."""
    from stickynet import analytic

    g = DyadicGrid()
    c = analytic.limit_constant()
    assert fractal.analytic_pn(16, g) * 2.0**8 == pytest.approx(c, rel=0.01)
    assert fractal.analytic_pn(20, g) * 2.0**10 == pytest.approx(c, rel=0.005)


def test_pn_asymptotic_slope_is_one_half():
    """log2 p_n decays with slope -1/2 in the asymptotic window."""
    g = DyadicGrid()
    ns = np.arange(12, 21)
    logp = np.log2([fractal.analytic_pn(int(n), g) for n in ns])
    slope = np.polyfit(ns.astype(float), logp, 1)[0]
    assert abs(slope + 0.5) < 0.07, f"asymptotic slope {slope}"


def test_pn_preasymptotic_range_increases():
    """For n <= 10 the corridor is narrower than the diffusive scale and the
    flag probability still grows with n; the -1/2 law has not set in yet."""
    g = DyadicGrid()
    p4, p8 = fractal.analytic_pn(4, g), fractal.analytic_pn(8, g)
    assert p4 < p8


def test_estimate_pn_matches_analytic():
    g = DyadicGrid()
    est = fractal.estimate_pn(6, 200_000, g, SeedSpec(61))
    want = fractal.analytic_pn(6, g)
    assert abs(est.p_hat - want) < 3.0 * est.stderr, (
        f"p_hat {est.p_hat} vs analytic {want} (stderr {est.stderr})"
    )
    assert est.ratio == pytest.approx(est.p_hat * 2.0**3)
    assert est.stderr == pytest.approx(
        math.sqrt(est.p_hat * (1 - est.p_hat) / est.reps)
    )


def test_estimate_pn_deterministic_and_chunk_invariant():
    g = DyadicGrid()
    a = fractal.estimate_pn(5, 3000, g, SeedSpec(62))
    b = fractal.estimate_pn(5, 3000, g, SeedSpec(62))
    assert a == b
    with pytest.raises(ValueError):
        fractal.estimate_pn(5, 0, g, SeedSpec(62))


def test_z_indicators_deterministic():
    g = DyadicGrid()
    z1 = fractal.z_indicators(5, g, 2000, SeedSpec(63).stream(0))
    z2 = fractal.z_indicators(5, g, 2000, SeedSpec(63).stream(0))
    assert np.array_equal(z1, z2)
    assert z1.dtype == bool


# ---------------------------------------------------------- variance bound

def test_variance_check_small_case():
    res = fractal.variance_check(0, 6, 20_000, DyadicGrid(), SeedSpec(71))
    assert res["passed"], f"variance UCL {res['var_ucl']} vs bound {res['bound_ucl']}"
    # independent flags: variance should also sit near n_cells * p * (1-p)
    approx = 2**6 * res["p_hat"] * (1 - res["p_hat"])
    assert res["sample_var"] == pytest.approx(approx, rel=0.2)
    assert abs(res["nonadjacent_corr"]) < 0.05
    with pytest.raises(ValueError):
        fractal.variance_check(6, 6, 10, DyadicGrid(), SeedSpec(71))


# -------------------------------------------------------- dyadic separation

def _separation_oracle(x1, x2, eps):
    """Smallest level whose cells separate x1 from x2 while 2^-M < 2 eps.

    Only the cells touching x1 or x2 can qualify, so each level needs a
    constant number of candidate checks.
    """
    for m in range(1, 64):
        if 2.0**-m >= 2.0 * eps:
            continue
        lo_j = math.floor(x1 * 2**m)
        hi_j = math.floor(x2 * 2**m)
        for j in {lo_j, lo_j + 1, hi_j, min(hi_j, 2**m - 1)}:
            if not 1 <= j <= 2**m - 1:
                continue
            t_prev, t, t_next = (j - 1) * 2.0**-m, j * 2.0**-m, (j + 1) * 2.0**-m
            if t_prev <= x1 <= t and t <= x2 <= t_next:
                return m, j
    raise AssertionError("oracle found no separating level")


def test_dyadic_separation_golden():
    assert fractal.dyadic_separation(0.24, 0.26, 0.05) == (4, 4)


def test_dyadic_separation_postconditions_random():
    rng = np.random.default_rng(81)
    for _ in range(2000):
        eps = float(rng.uniform(1e-4, 0.3))
        x1 = float(rng.uniform(0.0, 1.0 - 1e-9))
        x2 = x1 + float(rng.uniform(0.0, eps)) * 0.999
        if not x1 < x2 <= 1.0:
            continue
        m, j = fractal.dyadic_separation(x1, x2, eps)
        scale = 2.0**-m
        assert scale < 2.0 * eps
        assert (j - 1) * scale <= x1 <= j * scale
        assert j * scale <= x2 <= (j + 1) * scale


def test_dyadic_separation_errors():
    with pytest.raises(ValueError):
        fractal.dyadic_separation(0.5, 0.4, 0.2)
    with pytest.raises(ValueError):
        fractal.dyadic_separation(0.1, 0.5, 0.2)


@given(
    x1=st.floats(0.0, 0.999, allow_nan=False),
    gap=st.floats(1e-7, 0.2, allow_nan=False),
    slack=st.floats(1.001, 3.0),
)
@settings(max_examples=300, deadline=None)
def test_dyadic_separation_oracle_property(x1, gap, slack):
    x2 = x1 + gap
    if x2 > 1.0:
        x2 = 1.0
    if not x1 < x2:
        return
    eps = min(gap * slack, 0.49)
    if not x2 - x1 < eps:
        return
    m, j = fractal.dyadic_separation(x1, x2, eps)
    om, oj = _separation_oracle(x1, x2, eps)
    # both must satisfy the postconditions; the construction may refine the
    # oracle's minimal level when the binary expansions disagree deeper down
    assert m >= om
    scale = 2.0**-m
    assert scale < 2.0 * eps
    assert (j - 1) * scale <= x1 <= j * scale <= x2 <= (j + 1) * scale


# ------------------------------------------------------------ box counting

def test_box_count_all_flagged_slope_one():
    t = FlagTable(grid=DyadicGrid())
    for k in range(3, 9):
        t.set_level(k, np.ones(2**k, dtype=bool))
    fit = fractal.box_count_dimension(t, 3, 8)
    assert fit.weighted_slope == pytest.approx(1.0, abs=1e-12)
    assert fit.unweighted_slope == pytest.approx(1.0, abs=1e-12)


def test_box_count_single_flag_slope_zero():
    t = FlagTable(grid=DyadicGrid())
    for k in range(3, 9):
        flags = np.zeros(2**k, dtype=bool)
        flags[0] = True
        t.set_level(k, flags)
    fit = fractal.box_count_dimension(t, 3, 8)
    assert fit.weighted_slope == pytest.approx(0.0, abs=1e-12)


def test_box_count_skips_empty_levels():
    counts = {4: 0, 5: 4, 6: 8, 7: 16}
    with pytest.warns(UserWarning):
        fit = fractal.box_count_dimension(counts, 4, 7)
    assert np.array_equal(fit.levels, [5, 6, 7])
    assert fit.weighted_slope == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        fractal.box_count_dimension({4: 0, 5: 0, 6: 3}, 4, 6)


def test_box_count_level_errors():
    with pytest.raises(ValueError):
        fractal.box_count_dimension({1: 2, 2: 3}, 2, 2)


# ----------------------------------------------------- limsup / first moment

def test_limsup_set_union_of_levels():
    t = FlagTable(grid=DyadicGrid())
    t.set_level(2, [1, 0, 0, 0])
    t.set_level(3, [0, 0, 0, 0, 0, 0, 1, 0])
    u = fractal.limsup_set(t, 2)
    assert len(u) == 8
    assert u[0] and u[1], "level-2 flag covers two level-3 cells"
    assert u[6]
    assert not u[4]
    assert len(fractal.limsup_set(t, 5)) == 0


def test_first_moment_sum():
    t = FlagTable(grid=DyadicGrid())
    t.set_level(2, [1, 1, 0, 0])
    t.set_level(3, [1, 0, 0, 0, 0, 0, 0, 0])
    got = fractal.first_moment_sum(t, 0.5, 2)
    want = 2 * 0.25**0.5 + 1 * 0.125**0.5
    assert got == pytest.approx(want)
    assert fractal.first_moment_sum(t, 0.5, 3) == pytest.approx(0.125**0.5)


def test_first_moment_gamma_contrast():
    """Above the critical exponent the flagged-cell moment sum shrinks with
    depth; below it the sum grows."""
    g = DyadicGrid()
    table = fractal.z_flag_table(g, 14, 18, SeedSpec(91))
    sums_06 = [table.count(k) * g.cell_width(k) ** 0.6 for k in range(14, 19)]
    sums_04 = [table.count(k) * g.cell_width(k) ** 0.4 for k in range(14, 19)]
    assert sums_06[-1] < sums_06[0], f"gamma=0.6 level sums should decay: {sums_06}"
    assert sums_04[-1] > sums_04[0], f"gamma=0.4 level sums should grow: {sums_04}"
