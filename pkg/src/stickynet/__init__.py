"""Simulation and numerical verification toolkit for the left-right gap
process, its lattice net approximation, and the square-root flag scaling
behind the dimension-1/2 signature of special times."""

from .analytic import (
    MixedLaw,
    ResolventLaw,
    StickyParams,
    continuous_mass,
    density_full,
    density_zero,
    exit_survival,
    hitting_density,
    killed_kernel,
    limit_constant,
    mixed_law,
    resolvent,
)
from .fractal import (
    BoxCountFit,
    DyadicGrid,
    FlagTable,
    PnEstimate,
    analytic_pn,
    box_count_dimension,
    dyadic_separation,
    estimate_pn,
    variance_check,
    z_flag_table,
    z_indicator,
)
from .net_grid import (
    ArrowField,
    NetConfig,
    PointSet,
    SpecialTimeFlags,
    covering_flags_j1,
    covering_flags_j3,
    gap_statistics,
    generate_arrows,
    leftmost_path,
    reachable_set,
    rightmost_path,
)
from .rng import SeedSpec
from .sampler import (
    PairState,
    SamplePath,
    euler_pair_step,
    sample_d_increment,
    sample_d_increments,
    sample_d_path_timechange,
    sample_exit_indicator,
    sample_exit_indicators,
)

__version__ = "0.1.0"
