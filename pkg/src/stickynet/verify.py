"""Cross-module identity checks with a machine-readable report.

Each check compares an observed quantity against an independently computed
expectation (quadrature, finite differences, Monte Carlo) and records the
outcome; the full suite serializes to a schema-versioned JSON document plus
a CSV mirror, and is reproducible bit for bit from (config, master seed).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from scipy.special import erf

from . import analytic, sampler
from .analytic import SQRT2, StickyParams
from .rng import SeedSpec

SCHEMA_VERSION = 1

DEFAULT_T_GRID = tuple(float(t) for t in np.logspace(-4, 1, 20))
DEFAULT_LAMBDAS = (0.5, 1.0, 2.0)
DEFAULT_Y_GRID = (0.1, 0.5, 1.0, 3.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str
    observed: float
    expected: float
    tolerance: float
    detail: str = ""


def _result(name, observed, expected, tolerance, detail="") -> CheckResult:
    ok = abs(observed - expected) <= tolerance
    return CheckResult(
        name=name,
        status="pass" if ok else "fail",
        observed=float(observed),
        expected=float(expected),
        tolerance=float(tolerance),
        detail=detail,
    )


def check_normalization(t_grid=DEFAULT_T_GRID) -> list[CheckResult]:
    """Atom plus quadrature of the continuous part equals one, per time."""
    out = []
    for t in t_grid:
        law = analytic.mixed_law(t)
        out.append(_result(f"normalization_t={t:.6g}", law.total_mass(), 1.0, 1e-9))
    return out


def check_boundary(t_grid=(0.01, 0.1, 1.0), x_grid=(0.0, 0.5, 2.0)) -> list[CheckResult]:
    """Boundary condition: 2*sqrt(2)*atom equals the density at 0+."""
    out = []
    for t in t_grid:
        for x in x_grid:
            atom = analytic.atom_full(t, x)
            rho0 = float(analytic.pdf_full(t, x, 0.0))
            out.append(
                _result(f"boundary_t={t:g}_x={x:g}", 2.0 * SQRT2 * atom, rho0, 1e-8)
            )
    return out


def _laplace_continuous(lam: float, y: float) -> float:
    """Numerical time transform of the continuous density at fixed y.

    The t = u^2 substitution absorbs the integrable sqrt-singularity near
    zero; the truncation point keeps the exponential tail below 1e-9.
    """
    t_star = max(40.0 / lam, 40.0)

    def integrand(u):
        t = u * u
        return 2.0 * u * math.exp(-lam * t) * float(analytic.pdf_zero(t, y))

    val, _ = integrate.quad(
        integrand, 0.0, math.sqrt(t_star), epsabs=1e-11, epsrel=1e-10, limit=400
    )
    return val


def _laplace_atom(lam: float) -> float:
    t_star = max(40.0 / lam, 40.0)

    def integrand(u):
        t = u * u
        return 2.0 * u * math.exp(-lam * t) * analytic.atom_zero(t)

    val, _ = integrate.quad(
        integrand, 0.0, math.sqrt(t_star), epsabs=1e-12, epsrel=1e-10, limit=400
    )
    return val


def check_laplace(lambdas=DEFAULT_LAMBDAS, y_grid=DEFAULT_Y_GRID) -> list[CheckResult]:
    """Time-domain transform of the mixed law against the closed resolvent."""
    out = []
    params = StickyParams.left_right()
    for lam in lambdas:
        res = analytic.resolvent(lam, params)
        for y in y_grid:
            out.append(
                _result(
                    f"laplace_lam={lam:g}_y={y:g}",
                    _laplace_continuous(lam, y),
                    float(res.continuous(y)),
                    1e-5,
                )
            )
        atom_expected = 1.0 / (lam + 2.0 * math.sqrt(lam + 1.0) + 2.0)
        out.append(
            _result(f"laplace_atom_lam={lam:g}", _laplace_atom(lam), atom_expected, 1e-6)
        )
    return out


def _pde_residual(t: float, x: float, y: float, h: float) -> float:
    """Centered finite-difference residual of the forward equation."""

    def rho(tt, yy):
        return float(analytic.pdf_full(tt, x, yy)) if yy >= 0 else _rho_ext(tt, x, yy)

    d_t = (rho(t + h, y) - rho(t - h, y)) / (2.0 * h)
    d_y = (rho(t, y + h) - rho(t, y - h)) / (2.0 * h)
    d_yy = (rho(t, y + h) - 2.0 * rho(t, y) + rho(t, y - h)) / (h * h)
    return d_t - 0.5 * d_yy + SQRT2 * d_y


def _rho_ext(t, x, y):
    # analytic continuation of the closed form to y < 0, for stencils at y ~ 0
    import numpy as _np

    st = math.sqrt(t)
    s = x + y
    from scipy.special import erfcx

    u = s / (SQRT2 * st) + st
    gauss = math.exp(-((s - SQRT2 * t) ** 2) / (2.0 * t) - 2.0 * SQRT2 * x)
    poly = 2.0 * SQRT2 * (1.0 + SQRT2 * s + 2.0 * t)
    val = gauss * (poly * erfcx(u) - 4.0 * st * SQRT2 / math.sqrt(math.pi))
    if x > 0:
        val += float(analytic._killed_unchecked(t, _np.float64(x), _np.float64(y)))
    return val


def _atom_ode_residual(t: float, x: float, h: float) -> float:
    d_t = (analytic.atom_full(t + h, x) - analytic.atom_full(t - h, x)) / (2.0 * h)
    rho0 = _rho_ext(t, x, 0.0)
    d_y0 = (_rho_ext(t, x, h) - _rho_ext(t, x, -h)) / (2.0 * h)
    return d_t - (-SQRT2 * rho0 + 0.5 * d_y0)


def check_pde_residual(
    points=((0.05, 0.0, 0.3), (0.1, 0.5, 0.8), (0.5, 1.0, 1.5)),
    h: float = 1e-3,
) -> list[CheckResult]:
    """Order test of the forward-equation residual plus the boundary and
    atom identities."""
    out = []
    for t, x, y in points:
        r1 = _pde_residual(t, x, y, h)
        r2 = _pde_residual(t, x, y, h / 2.0)
        ratio = r1 / r2 if abs(r2) > 1e-14 else 4.0
        out.append(
            _result(
                f"pde_order_t={t:g}_x={x:g}_y={y:g}",
                ratio,
                4.0,
                0.5,
                detail=f"residual(h)={r1:.3e}",
            )
        )
    for t, x, _ in points:
        # Richardson-extrapolated stencils hit the 1e-6 target
        r_h = _atom_ode_residual(t, x, 1e-3)
        r_h2 = _atom_ode_residual(t, x, 5e-4)
        out.append(
            _result(
                f"atom_ode_t={t:g}_x={x:g}",
                (4.0 * r_h2 - r_h) / 3.0,
                0.0,
                1e-6,
            )
        )
    out.append(
        _result(
            "pde_far_field",
            abs(_pde_residual(0.01, 0.0, 10.0, 1e-3)),
            0.0,
            1e-12,
        )
    )
    return out


def _ks_statistic(sample: np.ndarray, cdf_vals: np.ndarray) -> float:
    n = len(sample)
    order = np.argsort(sample)
    f = cdf_vals[order]
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_critical(n: int, alpha: float = 0.01) -> float:
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) / math.sqrt(n)


def check_lemma_mt2_xt2(
    lam: float, params: StickyParams, reps: int, seed: SeedSpec
) -> list[CheckResult]:
    """Distributional checks at an independent exponential time: the running
    maximum is exponential with rate sqrt(2a)+mu, the reflected process is
    exponential with rate sqrt(2a)-mu."""
    mu = params.mu
    a = lam + 0.5 * mu * mu
    root = math.sqrt(2.0 * a)

    m_draws = sampler.sample_running_max_at_exp(mu, lam, reps, seed.stream(1))
    rate_hat = 1.0 / float(np.mean(m_draws))
    rate = root + mu
    rate_tol = 3.0 * rate / math.sqrt(reps) + 0.01 * rate
    out = [
        _result(
            f"running_max_rate_mu={mu:g}_lam={lam:g}",
            rate_hat,
            rate,
            rate_tol,
            detail=f"reps={reps}",
        )
    ]

    x_draws = sampler.sample_reflected_at_exp(mu, lam, reps, seed.stream(2))
    x_rate = root - mu
    ks = _ks_statistic(x_draws, 1.0 - np.exp(-x_rate * x_draws))
    out.append(
        _result(
            f"reflected_ks_mu={mu:g}_lam={lam:g}",
            ks,
            0.0,
            ks_critical(reps),
            detail=f"exponential rate {x_rate:.6g}",
        )
    )
    return out


def check_u_limit(
    z_list=(0.5, 1.0, 2.0), n_range=(8, 16, 24), length: float = 1.0
) -> list[CheckResult]:
    """Rescaled corridor survival approaches the one-sided positivity
    probability erf(z/sqrt(2)) as the level grows."""
    out = []
    for z in z_list:
        gaps = []
        for n in n_range:
            t_n = length * 2.0**-n
            u = analytic.exit_survival(t_n, z * math.sqrt(t_n), 2.0**-n, 1.0 / n, SQRT2)
            gaps.append(abs(u - erf(z / SQRT2)))
        decreasing = all(g2 <= g1 + 1e-12 for g1, g2 in zip(gaps, gaps[1:]))
        out.append(
            _result(
                f"u_limit_z={z:g}",
                gaps[-1],
                0.0,
                0.01,
                detail=f"gap sequence {['%.2e' % g for g in gaps]}, "
                f"monotone={decreasing}",
            )
        )
    return out


def run_all(seed: SeedSpec, mc_reps: int = 200_000) -> dict:
    """Execute the full suite; aggregation order is fixed by check name."""
    checks: list[CheckResult] = []
    checks += check_normalization()
    checks += check_boundary()
    checks += check_laplace()
    checks += check_pde_residual()
    for i, (mu, lam) in enumerate([(0.0, 1.0), (SQRT2, 1.0), (SQRT2, 0.5)]):
        params = StickyParams(mu=mu, theta=SQRT2)
        checks += check_lemma_mt2_xt2(lam, params, mc_reps, seed.stream(100 + i))
    checks += check_u_limit()
    checks.sort(key=lambda c: c.name)
    return {
        "version": SCHEMA_VERSION,
        "seed": seed.master_seed,
        "mc_reps": mc_reps,
        "failures": sum(1 for c in checks if c.status == "fail"),
        "checks": [asdict(c) for c in checks],
    }


def write_report(report: dict, json_path, csv_path=None) -> None:
    with open(json_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["name", "status", "observed", "expected", "tolerance", "detail"]
            )
            writer.writeheader()
            writer.writerows(report["checks"])
