"""Command-line front end: INI-configured runs with CSV outputs.

One configuration file fully determines a run.  Outputs are plain CSV at 17
significant digits, written atomically (temp file + rename), so identical
configurations reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import tempfile
import time

import numpy as np

from .cgm import run_cgm
from .experiments import (
    PRESETS,
    NoiseSpec,
    flux_error,
    noisy_observations,
)
from .mesh import Grid, spacetime_h1_diff
from .solver import PicardConfig, SolverError, solve_nonlinear

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_MISMATCH = 4

MODE_PRESETS = {
    "forward": {"Fwd1"},
    "adjoint": {"Adj2"},
    "invert": {"Inv1", "Inv2", "Inv3Soft", "Inv3Stiff"},
    "table": {"Inv1", "Inv2", "Inv3Soft", "Inv3Stiff"},
}


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def write_csv(path: str, header: list[str], rows) -> None:
    """Write rows atomically; every float at 17 significant digits."""
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-csv-")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_table(results: list[dict]) -> str:
    """Render sweep results as CSV text with a fixed column order."""
    cols = ["beta", "gamma", "epsilon_bar", "k_star", "E_f1", "E_f2"]
    lines = [",".join(cols)]
    for r in results:
        lines.append(",".join(_fmt(r[c]) for c in cols))
    return "\n".join(lines) + "\n"


def _get(cfg: configparser.ConfigParser, section: str, key: str, cast, default=None):
    if not cfg.has_option(section, key):
        if default is not None:
            return default
        raise ConfigError(f"missing [{section}] {key}")
    raw = cfg.get(section, key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc


def _grid_from_config(cfg: configparser.ConfigParser) -> Grid:
    t_final = _get(cfg, "grid", "t_final", float, 1.0)
    if cfg.has_option("grid", "h"):
        h = _get(cfg, "grid", "h", float)
        tau = _get(cfg, "grid", "tau", float)
        return Grid.from_spacing(h, tau, t_final)
    nx = _get(cfg, "grid", "nx", int)
    ny = _get(cfg, "grid", "ny", int, nx)
    nt = _get(cfg, "grid", "nt", int)
    return Grid(nx=nx, ny=ny, nt=nt, t_final=t_final)


def _picard_from_config(cfg: configparser.ConfigParser) -> PicardConfig:
    theta = _get(cfg, "picard", "theta_bar", float, 0.0) if cfg.has_section("picard") else 0.0
    fixed = _get(cfg, "picard", "fixed_iters", int, 0) if cfg.has_section("picard") else 0
    max_outer = _get(cfg, "picard", "max_outer", int, 100) if cfg.has_section("picard") else 100
    return PicardConfig(
        theta_bar=theta if theta > 0.0 else None,
        max_outer=max_outer,
        fixed_iters=fixed if fixed > 0 else None,
    )


def _solution_rows(grid: Grid, values: np.ndarray, times: list[float]):
    for t in times:
        n = int(round(t / grid.tau))
        n = min(max(n, 0), grid.nt)
        for i, x in enumerate(grid.xs):
            for j, y in enumerate(grid.ys):
                yield (x, y, grid.ts[n], values[i, j, n])


def _run_direct(cfg, preset_id, grid, beta, out, quiet) -> int:
    example = PRESETS[preset_id](grid, beta)
    picard = _picard_from_config(cfg)
    if picard.theta_bar is None and picard.fixed_iters is None:
        picard = PicardConfig(theta_bar=1e-4)
    start = time.perf_counter()
    u, report = solve_nonlinear(example.problem, picard)
    wall = time.perf_counter() - start
    err = spacetime_h1_diff(grid, u.values, example.exact.values)
    times_raw = _get(cfg, "output", "times", str, "") if cfg.has_section("output") else ""
    times = [float(s) for s in times_raw.split(",") if s.strip()] or [grid.t_final]
    write_csv(os.path.join(out, "solution.csv"), ["x", "y", "t", "u"], _solution_rows(grid, u.values, times))
    write_csv(
        os.path.join(out, "convergence.csv"),
        ["iteration", "residual"],
        [(i + 1, r) for i, r in enumerate(report.residual_history)],
    )
    # wall time goes to stdout only, so reruns produce byte-identical CSVs
    write_csv(
        os.path.join(out, "summary.csv"),
        ["eta_star", "error"],
        [(report.eta_star, err)],
    )
    if not quiet:
        print(f"{preset_id}: eta_star={report.eta_star} error={err:.6e} wall={wall:.2f}s")
    return 0


def _invert_once(example, gamma, seed, max_iter):
    obs = example.observations
    if gamma > 0.0:
        obs = noisy_observations(obs, NoiseSpec(gamma=gamma, seed=seed))
    report = run_cgm(example.problem, obs, max_iter=max_iter, exact_flux=example.exact_flux)
    e1, e2 = flux_error(report.reconstructed, example.exact_flux)
    return report, obs, e1, e2


def _run_invert(cfg, preset_id, grid, beta, out, seed, quiet) -> int:
    example = PRESETS[preset_id](grid, beta)
    gamma = _get(cfg, "noise", "gamma", float, 0.0) if cfg.has_section("noise") else 0.0
    max_iter = _get(cfg, "cgm", "max_iter", int, 1000) if cfg.has_section("cgm") else 1000
    start = time.perf_counter()
    report, obs, e1, e2 = _invert_once(example, gamma, seed, max_iter)
    wall = time.perf_counter() - start
    conv_rows = [
        (
            r["k"],
            r["J"],
            r["grad_norm1"],
            r["grad_norm2"],
            r["zeta1"],
            r["zeta2"],
            r["vartheta1"],
            r["vartheta2"],
            r.get("err1", 0.0),
            r.get("err2", 0.0),
        )
        for r in report.records
    ]
    write_csv(
        os.path.join(out, "convergence.csv"),
        ["k", "J", "grad_norm1", "grad_norm2", "zeta1", "zeta2", "vartheta1", "vartheta2", "E_f1", "E_f2"],
        conv_rows,
    )
    rec = report.reconstructed
    write_csv(
        os.path.join(out, "flux_gamma1.csv"),
        ["y", "t", "exact", "reconstructed"],
        (
            (grid.ys[j], grid.ts[n], example.exact_flux.f1.values[j, n], rec.f1.values[j, n])
            for j in range(grid.ny)
            for n in range(grid.nt + 1)
        ),
    )
    write_csv(
        os.path.join(out, "flux_gamma2.csv"),
        ["x", "t", "exact", "reconstructed"],
        (
            (grid.xs[i], grid.ts[n], example.exact_flux.f2.values[i, n], rec.f2.values[i, n])
            for i in range(grid.nx)
            for n in range(grid.nt + 1)
        ),
    )
    write_csv(
        os.path.join(out, "summary.csv"),
        ["k_star", "stop_reason", "epsilon_bar", "J_final", "E_f1", "E_f2"],
        [(report.k_star, report.stop_reason.value, obs.epsilon_bar, report.J_history[-1], e1, e2)],
    )
    if not quiet:
        print(
            f"{preset_id}: k*={report.k_star} stop={report.stop_reason.value} "
            f"E(f1)={e1:.6e} E(f2)={e2:.6e} wall={wall:.1f}s"
        )
    return 0


def _run_table(cfg, preset_id, grid, beta, out, seed, quiet) -> int:
    gammas_raw = _get(cfg, "noise", "gammas", str, "0,0.005,0.01,0.05") if cfg.has_section("noise") else "0,0.005,0.01,0.05"
    gammas = [float(s) for s in gammas_raw.split(",") if s.strip()]
    max_iter = _get(cfg, "cgm", "max_iter", int, 1000) if cfg.has_section("cgm") else 1000
    example = PRESETS[preset_id](grid, beta)
    results = []
    for gamma in gammas:
        report, obs, e1, e2 = _invert_once(example, gamma, seed, max_iter)
        results.append(
            {
                "beta": beta,
                "gamma": gamma,
                "epsilon_bar": obs.epsilon_bar,
                "k_star": report.k_star,
                "E_f1": e1,
                "E_f2": e2,
            }
        )
        if not quiet:
            print(f"{preset_id} gamma={gamma:g}: k*={report.k_star} E=({e1:.3e},{e2:.3e})")
    text = emit_table(results)
    os.makedirs(out, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".tmp-csv-")
    with os.fdopen(fd, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, os.path.join(out, "table.csv"))
    return 0


def run(config_path: str, mode=None, out=None, seed=None, quiet=False) -> int:
    """Execute one configured run; returns the process exit code."""
    cfg = configparser.ConfigParser()
    try:
        if not cfg.read(config_path):
            raise ConfigError(f"cannot read config file {config_path!r}")
        run_mode = mode or _get(cfg, "run", "mode", str)
        preset_id = _get(cfg, "run", "preset", str)
        out_dir = out or (_get(cfg, "run", "out", str, "out"))
        beta = _get(cfg, "problem", "beta", float, 0.3) if cfg.has_section("problem") else 0.3
        the_seed = seed if seed is not None else (
            _get(cfg, "noise", "seed", int, 1234) if cfg.has_section("noise") else 1234
        )
        grid = _grid_from_config(cfg)
        if run_mode not in MODE_PRESETS:
            raise ConfigError(f"unknown mode {run_mode!r}")
    except (ConfigError, configparser.Error) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if preset_id not in PRESETS:
        print(f"error: config: unknown preset {preset_id!r}", file=sys.stderr)
        return EXIT_CONFIG
    if preset_id not in MODE_PRESETS[run_mode]:
        print(f"error: mismatch: preset {preset_id!r} not valid for mode {run_mode!r}", file=sys.stderr)
        return EXIT_MISMATCH
    try:
        if run_mode in ("forward", "adjoint"):
            return _run_direct(cfg, preset_id, grid, beta, out_dir, quiet)
        if run_mode == "invert":
            return _run_invert(cfg, preset_id, grid, beta, out_dir, the_seed, quiet)
        return _run_table(cfg, preset_id, grid, beta, out_dir, the_seed, quiet)
    except SolverError as exc:
        print(f"error: solver: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fracflux",
        description="Fractional diffusion solvers and boundary-flux identification",
    )
    parser.add_argument("--config", required=True, help="INI configuration file")
    parser.add_argument("--mode", choices=sorted(MODE_PRESETS), help="override the configured mode")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="noise seed (overrides config)")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    args = parser.parse_args(argv)
    return run(args.config, mode=args.mode, out=args.out, seed=args.seed, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
