"""Closed-form densities, resolvents and kernels for the sticky reflected
drifted Brownian motion D (the rescaled gap of a left-right pair).

The law of D at a fixed time is mixed: an atom at zero plus a continuous
density on (0, inf).  All evaluations route the exp(2*sqrt(2)*y)*erfc(...)
products through erfcx so that no intermediate overflows for large y/sqrt(t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import erf, erfc, erfcx

SQRT2 = math.sqrt(2.0)
SQRT_PI = math.sqrt(math.pi)

# Quadrature window for normalizing the continuous part: beyond y_max the
# density is bounded by a Gaussian tail that contributes < 1e-15.
_QUAD_ABS_TOL = 1e-12


@dataclass(frozen=True)
class StickyParams:
    """Drift and stickiness of the gap process (space/time units)."""

    mu: float
    theta: float

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"drift must be nonnegative, got {self.mu}")
        if self.theta <= 0:
            raise ValueError(f"stickiness must be positive, got {self.theta}")

    @classmethod
    def left_right(cls) -> "StickyParams":
        """Parameters of the left-right pair gap: mu = theta = sqrt(2)."""
        return cls(mu=SQRT2, theta=SQRT2)


@dataclass(frozen=True)
class MixedLaw:
    """Atom at zero plus a continuous density on (0, inf)."""

    atom: float
    pdf: Callable[[np.ndarray], np.ndarray]
    t: float
    x0: float

    def continuous_mass(self, y_max: float | None = None) -> float:
        if y_max is None:
            y_max = 20.0 + 10.0 * math.sqrt(self.t) + self.x0
        val, _ = integrate.quad(self.pdf, 0.0, y_max, epsabs=_QUAD_ABS_TOL, limit=200)
        return val

    def total_mass(self) -> float:
        return self.atom + self.continuous_mass()


@dataclass(frozen=True)
class ResolventLaw:
    """Laplace transform in time of the mixed law: atom coefficient plus
    cont_coeff * exp(-exp_rate * y) on (0, inf)."""

    lam: float
    params: StickyParams
    atom_coeff: float
    cont_coeff: float
    exp_rate: float

    def continuous(self, y):
        return self.cont_coeff * np.exp(-self.exp_rate * np.asarray(y, dtype=float))

    def total_mass(self) -> float:
        return self.atom_coeff + self.cont_coeff / self.exp_rate


def _check_time(t: float) -> None:
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")


def atom_zero(t: float) -> float:
    """Mass at zero of the gap law started from zero (left-right case)."""
    _check_time(t)
    st = math.sqrt(t)
    return (1.0 + 2.0 * t) * erfc(st) - 2.0 * math.exp(-t) * st / SQRT_PI


def pdf_zero(t: float, y):
    """Continuous density of the gap law started from zero, vectorized in y."""
    _check_time(t)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("space argument must be nonnegative")
    st = math.sqrt(t)
    u = y / (SQRT2 * st) + st
    # exp(2*sqrt(2)*y) * erfc(u) = erfcx(u) * exp(-(y - sqrt(2) t)^2 / 2t)
    gauss = np.exp(-((y - SQRT2 * t) ** 2) / (2.0 * t))
    poly = 2.0 * SQRT2 * (1.0 + SQRT2 * y + 2.0 * t)
    return gauss * (poly * erfcx(u) - 4.0 * st * SQRT2 / SQRT_PI)


def density_zero(t: float, y):
    """Atom mass and continuous density value(s) for a start at zero."""
    return atom_zero(t), pdf_zero(t, y)


def atom_full(t: float, x: float) -> float:
    """Mass at zero of the gap law started from x >= 0."""
    _check_time(t)
    if x < 0:
        raise ValueError("start point must be nonnegative")
    st = math.sqrt(t)
    v = x / (SQRT2 * st) + st
    # erfc(v) = erfcx(v) * exp(-x^2/2t - sqrt(2) x - t)
    damp = math.exp(-x * x / (2.0 * t) - SQRT2 * x - t)
    return damp * ((1.0 + SQRT2 * x + 2.0 * t) * erfcx(v) - 2.0 * st / SQRT_PI)


def killed_kernel(t: float, x, y):
    """Transition density of sqrt(2)-drifted Brownian motion killed at zero.

    The image term carries the standard negative exponent; the source
    display's positive sign cannot define a subprobability kernel.
    """
    _check_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("killed kernel requires x > 0 and y > 0")
    norm = 1.0 / math.sqrt(2.0 * math.pi * t)
    direct = np.exp(-((y - x - SQRT2 * t) ** 2) / (2.0 * t))
    image = np.exp(-((y + x - SQRT2 * t) ** 2) / (2.0 * t) - 2.0 * SQRT2 * x)
    return norm * (direct - image)


def pdf_full(t: float, x: float, y):
    """Continuous density of the gap law started from x >= 0, vectorized in y."""
    _check_time(t)
    if x < 0:
        raise ValueError("start point must be nonnegative")
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("space argument must be nonnegative")
    st = math.sqrt(t)
    s = x + y
    u = s / (SQRT2 * st) + st
    gauss = np.exp(-((s - SQRT2 * t) ** 2) / (2.0 * t) - 2.0 * SQRT2 * x)
    poly = 2.0 * SQRT2 * (1.0 + SQRT2 * s + 2.0 * t)
    sticky_part = gauss * (poly * erfcx(u) - 4.0 * st * SQRT2 / SQRT_PI)
    if x == 0:
        return sticky_part
    with np.errstate(invalid="ignore"):
        killed = np.where(y > 0, _killed_unchecked(t, x, y), 0.0)
    return killed + sticky_part


def _killed_unchecked(t, x, y):
    norm = 1.0 / math.sqrt(2.0 * math.pi * t)
    direct = np.exp(-((y - x - SQRT2 * t) ** 2) / (2.0 * t))
    image = np.exp(-((y + x - SQRT2 * t) ** 2) / (2.0 * t) - 2.0 * SQRT2 * x)
    return norm * (direct - image)


def density_full(t: float, x: float, y):
    """Atom mass and continuous density value(s) for a start at x >= 0."""
    return atom_full(t, x), pdf_full(t, x, y)


def mixed_law(t: float, x: float = 0.0) -> MixedLaw:
    """The full gap law at elapsed time t from start point x."""
    atom = atom_full(t, x)
    return MixedLaw(atom=atom, pdf=lambda y: pdf_full(t, x, y), t=t, x0=x)


def resolvent(lam: float, params: StickyParams) -> ResolventLaw:
    """Laplace transform of the gap law for general drift and stickiness."""
    if not lam > 0:
        raise ValueError(f"rate must be positive, got {lam}")
    a = lam + 0.5 * params.mu**2
    root = math.sqrt(2.0 * a)
    denom = lam + params.theta * (root + params.mu)
    return ResolventLaw(
        lam=lam,
        params=params,
        atom_coeff=1.0 / denom,
        cont_coeff=2.0 * params.theta / denom,
        exp_rate=root - params.mu,
    )


def hitting_density(s, x: float):
    """Density of the first zero-hitting time of a sqrt(2)-drifted motion from x."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("time must be positive")
    if not x > 0:
        raise ValueError(f"start point must be positive, got {x}")
    return x / np.sqrt(2.0 * math.pi * s**3) * np.exp(-((x + SQRT2 * s) ** 2) / (2.0 * s))


def continuous_mass(t: float) -> float:
    """Mass of the continuous part of the zero-start gap law (excludes the atom)."""
    _check_time(t)
    st = math.sqrt(t)
    return erf(st) - 2.0 * t * erfc(st) + 2.0 * math.exp(-t) * st / SQRT_PI


def _exp_ncdf(c: float, z: float) -> float:
    """exp(c) * Phi(z), stable when Phi underflows while exp(c) overflows."""
    u = -z / SQRT2
    if u > 0.0:
        return 0.5 * erfcx(u) * math.exp(c - u * u)
    return 0.5 * math.exp(c) * erfc(u)


_SERIES_TOL = 1e-14


def exit_survival(t: float, y0: float, lo: float, hi: float, drift: float) -> float:
    """Probability that a drifted Brownian motion started at y0 stays strictly
    inside (lo, hi) up to time t.

    Computed by Girsanov-tilting the driftless two-barrier image series and
    integrating each image term in closed form; truncated once terms fall
    below 1e-14.
    """
    if lo >= hi:
        raise ValueError(f"barriers must satisfy lo < hi, got {lo} >= {hi}")
    _check_time(t)
    if y0 <= lo or y0 >= hi:
        return 0.0
    length = hi - lo
    x = y0 - lo
    st = math.sqrt(t)
    nu = drift

    def term(k: int) -> float:
        shift = 2.0 * k * length
        c_plus = nu * shift
        plus = _exp_ncdf(c_plus, (length - x - shift - nu * t) / st) - _exp_ncdf(
            c_plus, (-x - shift - nu * t) / st
        )
        c_minus = nu * (shift - 2.0 * x)
        minus = _exp_ncdf(c_minus, (length + x - shift - nu * t) / st) - _exp_ncdf(
            c_minus, (x - shift - nu * t) / st
        )
        return plus - minus

    total = term(0)
    k = 1
    while k < 1000:
        inc = term(k) + term(-k)
        total += inc
        if abs(inc) < _SERIES_TOL:
            break
        k += 1
    return min(max(total, 0.0), 1.0)


def limit_constant() -> float:
    """Limit of the scaled flag probability p_n / sqrt(t_n).

    The integrand pairs the rescaled density limit 2*sqrt(2)*erfc(z/sqrt(2))
    with the corridor-survival limit, which is the probability that a
    standard Brownian motion started at z stays positive over a unit
    interval: 2*Phi(z) - 1 = erf(z/sqrt(2)).  (Some write-ups state this
    survival limit as erf(z); direct evaluation of the survival
    probability and of the scaled p_n both give the erf(z/sqrt(2)) form.)
    """
    val, _ = integrate.quad(
        lambda z: 2.0 * SQRT2 * erfc(z / SQRT2) * erf(z / SQRT2),
        0.0,
        np.inf,
        epsabs=1e-14,
        epsrel=1e-12,
    )
    return val
