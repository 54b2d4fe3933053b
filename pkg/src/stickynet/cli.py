"""Batch experiment runner: tabulates densities, samples paths, sweeps flag
probabilities, runs lattice nets, estimates box-count slopes and executes
the verification suite.

Every run echoes its effective configuration into the output directory;
re-running from that echo reproduces all outputs byte for byte.  Parallel
work is distributed over deterministic seed streams, so results do not
depend on the worker count.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analytic, fractal, net_grid, sampler, verify
from .analytic import StickyParams
from .fractal import DyadicGrid
from .rng import SeedSpec

EXIT_BAD_COMMAND = 2
EXIT_BAD_CONFIG = 3
EXIT_BAD_OUTPUT = 4

_DEFAULTS = {
    "seed": 1,
    "threads": 0,  # 0 = machine parallelism
    "density.t": "0.01,0.1,1.0",
    "density.x": "0.0",
    "density.y": "0.0:5.0:51",
    "sample.horizon": "1.0",
    "sample.grid_dt": "0.001",
    "sample.paths": "4",
    "pn.n_min": "4",
    "pn.n_max": "10",
    "pn.reps": "100000",
    "net.eps": "0.0078125",
    "net.horizon": "1.0",
    "net.width": "4.0",
    "net.branch_coeff": "1.0",
    "net.level": "4",
    "dim.grids": "50",
    "dim.k_min": "4",
    "dim.k_max": "12",
    "verify.reps": "200000",
}


def _read_config(path: str) -> dict:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


class ConfigError(Exception):
    pass


def _effective_config(args) -> dict:
    cfg = dict(_DEFAULTS)
    if args.config:
        cfg.update(_read_config(args.config))
    env_seed = os.environ.get("STICKYNET_SEED")
    if env_seed is not None:
        cfg["seed"] = int(env_seed)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        cfg["threads"] = args.threads
    for key, val in (args.set or []):
        cfg[key] = val
    cfg["seed"] = int(cfg["seed"])
    cfg["threads"] = int(cfg["threads"])
    return cfg


def _echo_config(cfg: dict, out_dir: Path) -> str:
    lines = [f"{k} = {cfg[k]}" for k in sorted(cfg)]
    text = "\n".join(lines) + "\n"
    (out_dir / "config.echo").write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _provenance(cfg: dict, cfg_hash: str) -> str:
    return f"#seed={cfg['seed']}\n#config-hash={cfg_hash}\n"


def _write_csv(path: Path, header: list[str], rows, preamble: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(preamble)
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _floats(spec: str) -> list[float]:
    if ":" in spec:
        lo, hi, n = spec.split(":")
        return [float(x) for x in np.linspace(float(lo), float(hi), int(n))]
    return [float(x) for x in spec.split(",")]


def _pool_size(cfg: dict) -> int:
    n = cfg["threads"]
    return n if n > 0 else (os.cpu_count() or 1)


def _maybe_svg(cfg, out_dir: Path, name: str, xs, ys, xlabel, ylabel) -> None:
    if not cfg.get("_svg"):
        return
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(xs, ys, marker="o", lw=1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(out_dir / f"{name}.svg")
    plt.close(fig)


def _run_density(cfg, out_dir, cfg_hash) -> int:
    rows = []
    ts = _floats(cfg["density.t"])
    xs = _floats(cfg["density.x"])
    ys = _floats(cfg["density.y"])
    for t in ts:
        for x in xs:
            atom = analytic.atom_full(t, x)
            pdf = analytic.pdf_full(t, x, np.array(ys))
            for y, p in zip(ys, pdf):
                rows.append((t, x, y, atom, float(p)))
    _write_csv(
        out_dir / "density.csv",
        ["t", "x", "y", "atom", "pdf"],
        rows,
        _provenance(cfg, cfg_hash),
    )
    _maybe_svg(cfg, out_dir, "density", ys, [r[4] for r in rows[: len(ys)]], "y", "pdf")
    return 0


def _run_sample(cfg, out_dir, cfg_hash) -> int:
    horizon = float(cfg["sample.horizon"])
    grid_dt = float(cfg["sample.grid_dt"])
    n_paths = int(cfg["sample.paths"])
    seed = SeedSpec(cfg["seed"])
    rows = []
    for pid in range(n_paths):
        path = sampler.sample_d_path_timechange(
            horizon, grid_dt, StickyParams.left_right(), seed.stream(pid)
        )
        rows.extend((pid, float(t), float(v)) for t, v in zip(path.times, path.values))
    _write_csv(
        out_dir / "paths.csv",
        ["path_id", "time", "value"],
        rows,
        _provenance(cfg, cfg_hash),
    )
    return 0


def _run_pn(cfg, out_dir, cfg_hash) -> int:
    n_min, n_max = int(cfg["pn.n_min"]), int(cfg["pn.n_max"])
    reps = int(float(cfg["pn.reps"]))
    grid = DyadicGrid()
    seed = SeedSpec(cfg["seed"])
    ns = list(range(n_min, n_max + 1))

    def one(n):
        est = fractal.estimate_pn(n, reps, grid, seed.stream(1000 + n))
        return est, fractal.analytic_pn(n, grid)

    with ThreadPoolExecutor(max_workers=_pool_size(cfg)) as pool:
        results = list(pool.map(one, ns))

    slope = _pn_slope([r[0] for r in results])
    rows = [
        (e.n, e.reps, e.p_hat, e.stderr, e.ratio, pa, slope)
        for e, pa in results
    ]
    _write_csv(
        out_dir / "pn.csv",
        ["n", "reps", "p_hat", "stderr", "ratio_2n2", "analytic_pn", "slope"],
        rows,
        _provenance(cfg, cfg_hash),
    )
    _maybe_svg(cfg, out_dir, "pn", ns, [math.log2(max(r[2], 1e-12)) for r in rows], "n", "log2 p_n")
    return 0


def _pn_slope(estimates) -> float:
    """Inverse-variance weighted slope of log2 p_hat against n.

    Estimates with no hits carry no information about the log slope and
    are dropped from the fit.
    """
    estimates = [e for e in estimates if e.p_hat > 0.0]
    if len(estimates) < 2:
        return float("nan")
    ns = np.array([e.n for e in estimates], dtype=float)
    p = np.array([e.p_hat for e in estimates])
    se = np.array([max(e.stderr, 1e-15) for e in estimates])
    logp = np.log2(p)
    w = (p * math.log(2.0) / se) ** 2
    xm = np.sum(w * ns) / np.sum(w)
    ym = np.sum(w * logp) / np.sum(w)
    return float(np.sum(w * (ns - xm) * (logp - ym)) / np.sum(w * (ns - xm) ** 2))


def _run_net(cfg, out_dir, cfg_hash) -> int:
    config = net_grid.NetConfig(
        eps=float(cfg["net.eps"]),
        horizon=float(cfg["net.horizon"]),
        width=float(cfg["net.width"]),
        branch_coeff=float(cfg["net.branch_coeff"]),
    )
    seed = SeedSpec(cfg["seed"])
    field = net_grid.generate_arrows(config, seed.stream(0))
    grid = DyadicGrid(0.0, config.n_steps * config.eps**2)
    rows = net_grid.export_run(field, [0], grid, int(cfg["net.level"]), None)
    preamble = _provenance(cfg, cfg_hash)
    _write_csv(
        out_dir / "net.csv",
        ["step", "position_count", "min_gap", "flagged_j1", "flagged_j3"],
        [(r["step"], r["position_count"], r["min_gap"], r["flagged_j1"], r["flagged_j3"]) for r in rows],
        preamble,
    )
    return 0


def _run_dim(cfg, out_dir, cfg_hash) -> int:
    grids = int(cfg["dim.grids"])
    k_min, k_max = int(cfg["dim.k_min"]), int(cfg["dim.k_max"])
    grid = DyadicGrid()
    seed = SeedSpec(cfg["seed"])

    def one(g):
        table = fractal.z_flag_table(grid, k_min, k_max, seed.stream(5000 + g * 100))
        fit = fractal.box_count_dimension(table, k_min, k_max)
        counts = {k: table.count(k) for k in range(k_min, k_max + 1)}
        return fit, counts

    with ThreadPoolExecutor(max_workers=_pool_size(cfg)) as pool:
        results = list(pool.map(one, range(grids)))

    w_slope = float(np.mean([f.weighted_slope for f, _ in results]))
    u_slope = float(np.mean([f.unweighted_slope for f, _ in results]))
    rows = []
    for k in range(k_min, k_max + 1):
        mean_count = float(np.mean([c[k] for _, c in results]))
        rows.append((k, mean_count, w_slope, u_slope))
    _write_csv(
        out_dir / "dim.csv",
        ["level", "count", "weighted_slope", "unweighted_slope"],
        rows,
        _provenance(cfg, cfg_hash),
    )
    _maybe_svg(cfg, out_dir, "dim", [r[0] for r in rows], [math.log2(max(r[1], 1e-12)) for r in rows], "level", "log2 count")
    return 0


def _run_verify(cfg, out_dir, cfg_hash) -> int:
    report = verify.run_all(SeedSpec(cfg["seed"]), mc_reps=int(float(cfg["verify.reps"])))
    report["config_hash"] = cfg_hash
    verify.write_report(report, out_dir / "verify.json", out_dir / "verify.csv")
    return 0 if report["failures"] == 0 else 1

_COMMANDS = {
    "density": _run_density,
    "sample": _run_sample,
    "pn": _run_pn,
    "net": _run_net,
    "dim": _run_dim,
    "verify": _run_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stickynet")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--config", default=None)
    parser.add_argument("--out", default="out")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--svg", action="store_true")
    parser.add_argument(
        "--set",
        nargs=2,
        action="append",
        metavar=("KEY", "VALUE"),
        help="override one config key, e.g. --set pn.reps 1e6",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else EXIT_BAD_COMMAND
    try:
        cfg = _effective_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    cfg["_svg"] = args.svg
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_BAD_OUTPUT
    # the worker count never affects results, so it stays out of the echoed
    # experiment config and its provenance hash
    echo_cfg = {k: v for k, v in cfg.items() if not k.startswith("_") and k != "threads"}
    cfg_hash = _echo_config(echo_cfg, out_dir)
    return _COMMANDS[args.command](cfg, out_dir, cfg_hash)


if __name__ == "__main__":
    sys.exit(main())
