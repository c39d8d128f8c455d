"""Command line entry point: simulate, fit, project, summarize.

Settings resolve in three layers: built-in defaults, then an INI config
file, then command-line flags. Every command writes a manifest with the
resolved settings and input digests; reruns with equal manifests produce
byte-identical outputs.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .climate import (
    build_binning,
    build_panel,
    panel_summary,
    per_plot_intensity,
    read_climate_csv,
    write_climate_csv,
    write_panel_summary_csv,
)
from .errors import ConvergenceError, DomainError, EmptyBinError, InputError
from .grid import discretize, read_patterns_csv, write_patterns_csv
from .inference import (
    MCMCConfig,
    abundance_summary,
    build_fit_context,
    mcmc_fit,
    read_chain,
    summarize,
    write_chain_csv,
    write_chain_meta,
)
from .kernel import KernelParams
from .propagation import build_kernel_matrix
from .simulate import (
    SimConfig,
    derive_seed,
    inject_missingness,
    posterior_projection,
    simulate_dataset,
    truncate_panel,
)

__version__ = "0.1.0"

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


class _Resolver:
    """Defaults, overridden by INI values, overridden by flags."""

    def __init__(self, config_path: str | None) -> None:
        self.cfg = None
        if config_path:
            path = Path(config_path)
            if not path.is_file():
                raise InputError(f"config file {path} does not exist")
            parser = configparser.ConfigParser()
            try:
                parser.read_string(path.read_text())
            except configparser.Error as exc:
                raise InputError(f"{path}: {exc}") from exc
            self.cfg = parser

    def get(self, section: str, key: str, cast, default, flag=None):
        if flag is not None:
            return flag
        if self.cfg is not None and self.cfg.has_option(section, key):
            raw = self.cfg.get(section, key).strip()
            if raw == "":
                return default
            if cast is bool:
                low = raw.lower()
                if low in _BOOL_TRUE:
                    return True
                if low in _BOOL_FALSE:
                    return False
                raise InputError(f"[{section}] {key}: not a boolean: {raw!r}")
            try:
                return cast(raw)
            except ValueError as exc:
                raise InputError(f"[{section}] {key}: {exc}") from exc
        return default


def _parse_grid(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise InputError(f"--grid wants L,U,B, got {text!r}")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise InputError(f"--grid {text!r}: {exc}") from exc


def _parse_bins(text: str):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise InputError(f"--bins wants NTxNP, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise InputError(f"--bins {text!r}: {exc}") from exc


def _resolve_grid(res: _Resolver, args):
    flag = _parse_grid(args.grid) if getattr(args, "grid", None) else None
    lower = res.get("grid", "lower", float, 0.0, flag[0] if flag else None)
    upper = res.get("grid", "upper", float, 50.0, flag[1] if flag else None)
    cells = res.get("grid", "cells", int, 100, flag[2] if flag else None)
    return discretize(lower, upper, cells)


def _resolve_bins(res: _Resolver, args):
    flag = _parse_bins(args.bins) if getattr(args, "bins", None) else None
    n_temp = res.get("binning", "n_temp", int, 4, flag[0] if flag else None)
    n_precip = res.get("binning", "n_precip", int, 1, flag[1] if flag else None)
    return n_temp, n_precip


def _prepare_out(path: Path, overwrite: bool) -> None:
    if path.exists() and any(path.iterdir()):
        if not overwrite:
            raise InputError(
                f"output directory {path} is not empty; pass --overwrite to reuse it"
            )
    path.mkdir(parents=True, exist_ok=True)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(
    out_dir: Path, command: str, settings: dict, inputs: dict[str, Path], outputs: list[str]
) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "settings": settings,
        "inputs": {name: _sha256(Path(p)) for name, p in inputs.items()},
        "outputs": sorted(outputs),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def _truth_params(res: _Resolver) -> KernelParams:
    beta_text = res.get("truth", "beta", str, "0.01")
    beta = np.array([float(tok) for tok in str(beta_text).split(",")])
    return KernelParams(
        q0=res.get("truth", "q0", float, 1.0),
        q1=res.get("truth", "q1", float, 0.01),
        sigma=res.get("truth", "sigma", float, 0.25),
        delta0=res.get("truth", "delta0", float, 0.30),
        delta1=res.get("truth", "delta1", float, 0.0),
        eta=res.get("truth", "eta", float, 0.10),
        beta=beta,
        mu=res.get("truth", "mu", float, 0.0),
    )


def cmd_simulate(args) -> int:
    res = _Resolver(args.config)
    grid = _resolve_grid(res, args)
    seed = res.get("simulate", "seed", int, 0, args.seed)
    missing = res.get("simulate", "missing", float, 0.0, args.missing)
    sim = SimConfig(
        n_bins=res.get("simulate", "n_bins", int, 4),
        plots_per_bin=res.get("simulate", "plots_per_bin", int, 100),
        horizon=res.get("simulate", "horizon", int, 10),
        true_params=_truth_params(res),
        missing_fraction=missing,
        seed=seed,
        grid=grid,
        initial_mass=res.get("simulate", "initial_mass", float, 30.0),
        use_gp=res.get("simulate", "use_gp", bool, True),
        bandwidth=res.get("simulate", "bandwidth", float, None),
    )
    out_dir = Path(args.out)
    _prepare_out(out_dir, args.overwrite)

    data = simulate_dataset(sim)
    panel = data.panel
    if missing > 0:
        panel = inject_missingness(
            panel, missing, derive_seed(seed, 9999), sim.plots_per_bin
        )
    observed = sorted(panel.patterns.values(), key=lambda p: (p.plot_id, p.year))
    write_patterns_csv(observed, out_dir / "patterns.csv")
    write_climate_csv(data.climates, out_dir / "climate.csv")
    truth_rows = [
        ("q0", sim.true_params.q0),
        ("q1", sim.true_params.q1),
        ("sigma", sim.true_params.sigma),
        ("delta0", sim.true_params.delta0),
        ("delta1", sim.true_params.delta1),
        ("eta", sim.true_params.eta),
        ("mu", sim.true_params.mu),
    ]
    truth_rows += [
        (f"beta_{k}", float(b)) for k, b in enumerate(sim.true_params.beta)
    ]
    gp = sim.effective_gp()
    if gp is not None:
        truth_rows += [("sigma2_eps", gp.sigma2_eps), ("phi", gp.phi)]
    with (out_dir / "truth_params.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["param", "value"])
        for name, value in truth_rows:
            writer.writerow([name, f"{value:.10g}"])

    settings = {
        "seed": seed,
        "missing_fraction": missing,
        "n_bins": sim.n_bins,
        "plots_per_bin": sim.plots_per_bin,
        "horizon": sim.horizon,
        "grid": [grid.lower, grid.upper, grid.cells],
        "initial_mass": sim.initial_mass,
        "use_gp": sim.use_gp,
        "truth": {name: value for name, value in truth_rows},
    }
    inputs = {"config": args.config} if args.config else {}
    _write_manifest(
        out_dir,
        "simulate",
        settings,
        inputs,
        ["patterns.csv", "climate.csv", "truth_params.csv"],
    )
    print(
        f"wrote {len(observed)} observed plot-years over {sim.horizon} years "
        f"to {out_dir}"
    )
    return 0


def _summary_rows(names, samples) -> list[dict]:
    rows = []
    for j, name in enumerate(names):
        col = samples[:, j]
        lo, hi = np.percentile(col, [2.5, 97.5])
        rows.append(
            {"param": name, "mean": float(col.mean()), "lower": float(lo), "upper": float(hi)}
        )
    return rows


def _write_summary(rows: list[dict], out_dir: Path) -> None:
    with (out_dir / "summary.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["param", "mean", "lower", "upper"])
        for row in rows:
            writer.writerow(
                [
                    row["param"],
                    f"{row['mean']:.10g}",
                    f"{row['lower']:.10g}",
                    f"{row['upper']:.10g}",
                ]
            )
    lines = ["parameter posterior summary", ""]
    lines.append(f"{'param':<12}{'mean':>12}{'2.5%':>12}{'97.5%':>12}")
    for row in rows:
        lines.append(
            f"{row['param']:<12}{row['mean']:>12.5g}{row['lower']:>12.5g}{row['upper']:>12.5g}"
        )
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")


def _load_panel(args, res: _Resolver):
    patterns_path = Path(args.patterns)
    climate_path = Path(args.climate)
    for path in (patterns_path, climate_path):
        if not path.is_file():
            raise InputError(f"input file {path} does not exist")
    patterns = read_patterns_csv(patterns_path)
    climates = read_climate_csv(climate_path)
    n_temp, n_precip = _resolve_bins(res, args)
    mode = res.get(
        "binning", "covariate_mode", str, "temp", getattr(args, "covariate_mode", None)
    )
    binning = build_binning(list(climates.values()), n_temp, n_precip)
    panel = build_panel(patterns, climates, binning, covariate_mode=mode)
    return panel, binning, patterns_path, climate_path, mode


def _mcmc_settings(res: _Resolver, args) -> tuple[MCMCConfig, int]:
    delta_max = res.get("model", "delta_max", float, None, args.delta_max)
    cfg = MCMCConfig(
        iterations=res.get("mcmc", "iterations", int, 50_000, args.iterations),
        burn_in=res.get("mcmc", "burn_in", int, 10_000, args.burn_in),
        thin=res.get("mcmc", "thin", int, 10, args.thin),
        seed=res.get("mcmc", "seed", int, 0, args.seed),
        q_max=res.get("model", "q_max", float, 0.5, args.q_max),
        delta_max=delta_max,
        estimate_delta1=res.get(
            "model", "estimate_delta1", bool, False, args.estimate_delta1 or None
        ),
        gp_family=res.get("model", "gp_family", str, "exponential", args.gp_family),
    )
    chains = res.get("mcmc", "chains", int, 1, args.chains)
    if chains < 1:
        raise InputError("--chains must be at least 1")
    return cfg, chains


def cmd_fit(args) -> int:
    res = _Resolver(args.config)
    panel, binning, patterns_path, climate_path, mode = _load_panel(args, res)
    if args.train_years is not None:
        panel = truncate_panel(panel, args.train_years)
    grid = _resolve_grid(res, args)
    bandwidth = res.get("model", "bandwidth", float, None, args.bandwidth)
    mcmc_cfg, n_chains = _mcmc_settings(res, args)

    out_dir = Path(args.out)
    _prepare_out(out_dir, args.overwrite)
    try:
        ctx = build_fit_context(panel, grid, bandwidth=bandwidth)
    except DomainError as exc:
        sys.stderr.write(f"error: {exc}\n")
        sys.stderr.write("occupancy by (year, bin):\n")
        sys.stderr.write("year,bin,n_start,m_end,pooled_count_start,pooled_count_end\n")
        for row in panel_summary(panel):
            sys.stderr.write(
                f"{row['year']},{row['bin']},{row['n_start']},{row['m_end']},"
                f"{row['pooled_count_start']},{row['pooled_count_end']}\n"
            )
        return 2

    chains = []
    interrupted = False
    outputs = []
    for c in range(n_chains):
        chain_cfg = replace(
            mcmc_cfg,
            seed=mcmc_cfg.seed if n_chains == 1 else derive_seed(mcmc_cfg.seed, c),
        )
        chain = mcmc_fit(ctx, None, chain_cfg)
        write_chain_csv(chain, out_dir / f"chain_{c}.csv")
        write_chain_meta(chain, out_dir / f"chain_{c}_meta.json")
        outputs += [f"chain_{c}.csv", f"chain_{c}_meta.json"]
        chains.append(chain)
        if chain.interrupted:
            interrupted = True
            sys.stderr.write(
                f"chain {c} interrupted; checkpointed {chain.n_kept} kept samples\n"
            )
            break

    pooled = np.concatenate([c.samples for c in chains], axis=0)
    if pooled.shape[0] >= 100:
        _write_summary(_summary_rows(chains[0].names, pooled), out_dir)
        outputs += ["summary.csv", "summary.txt"]
    else:
        sys.stderr.write(
            f"only {pooled.shape[0]} kept samples; summary files skipped\n"
        )
    with (out_dir / "abundance.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["year", "bin", "observed_per_plot", "predicted_mean", "lower", "median", "upper"]
        )
        for row in abundance_summary(chains[0], ctx):
            writer.writerow(
                [
                    row["year"],
                    row["bin"],
                    f"{row['observed_per_plot']:.10g}",
                    f"{row['predicted_mean']:.10g}",
                    f"{row['lower']:.10g}",
                    f"{row['median']:.10g}",
                    f"{row['upper']:.10g}",
                ]
            )
    write_panel_summary_csv(panel, out_dir / "panel_summary.csv")
    outputs += ["abundance.csv", "panel_summary.csv"]

    settings = {
        "grid": [grid.lower, grid.upper, grid.cells],
        "bins": [binning.n_temp, binning.n_precip],
        "covariate_mode": mode,
        "bandwidth": bandwidth,
        "iterations": mcmc_cfg.iterations,
        "burn_in": mcmc_cfg.burn_in,
        "thin": mcmc_cfg.thin,
        "seed": mcmc_cfg.seed,
        "chains": n_chains,
        "q_max": mcmc_cfg.q_max,
        "delta_max": mcmc_cfg.delta_max,
        "estimate_delta1": mcmc_cfg.estimate_delta1,
        "gp_family": mcmc_cfg.gp_family,
        "train_years": args.train_years,
        "constraint": list(ctx.constraint),
    }
    inputs = {"patterns": patterns_path, "climate": climate_path}
    if args.config:
        inputs["config"] = args.config
    _write_manifest(out_dir, "fit", settings, inputs, outputs)
    if interrupted:
        return 3
    print(f"fit {len(ctx.terms)} transition terms; outputs in {out_dir}")
    return 0


def _chain_paths(args):
    chain_path = Path(args.chain)
    meta_path = (
        Path(args.chain_meta)
        if args.chain_meta
        else chain_path.with_name(chain_path.stem + "_meta.json")
    )
    for path in (chain_path, meta_path):
        if not path.is_file():
            raise InputError(f"chain file {path} does not exist")
    return chain_path, meta_path


def cmd_project(args) -> int:
    res = _Resolver(args.config)
    chain_path, meta_path = _chain_paths(args)
    chain = read_chain(chain_path, meta_path)
    panel, binning, patterns_path, climate_path, mode = _load_panel(args, res)
    grid = _resolve_grid(res, args)
    bandwidth = res.get("model", "bandwidth", float, None, args.bandwidth)
    steps = args.horizon if args.horizon is not None else 9
    if steps < 0:
        raise InputError("--horizon must be nonnegative")
    out_dir = Path(args.out)
    _prepare_out(out_dir, args.overwrite)

    band_rows = []
    abundance_rows = []
    for l in sorted(panel.bin_labels()):
        try:
            anchor = per_plot_intensity(panel, 0, l, grid, bandwidth)
        except EmptyBinError:
            continue
        z = panel.bin_covariates[l]
        ends = posterior_projection(chain, anchor, z, steps)
        lo, mid, hi = np.percentile(ends, [2.5, 50.0, 97.5], axis=0)
        for j, center in enumerate(grid.centers):
            band_rows.append(
                {
                    "bin": l,
                    "cell_center": float(center),
                    "lower": float(lo[j]),
                    "median": float(mid[j]),
                    "upper": float(hi[j]),
                    "truth": "",
                }
            )
        masses = np.empty((chain.n_kept, steps + 1))
        for i in range(chain.n_kept):
            params = chain.kernel_params(i)
            values = anchor.values
            masses[i, 0] = values.sum() * grid.width
            for s in range(steps):
                matrix = build_kernel_matrix(grid, z, params, float(masses[i, s]))
                values = matrix.entries @ values
                masses[i, s + 1] = values.sum() * grid.width
        q = np.percentile(masses, [2.5, 50.0, 97.5], axis=0)
        for s in range(steps + 1):
            abundance_rows.append(
                {
                    "bin": l,
                    "step": s,
                    "lower": float(q[0, s]),
                    "median": float(q[1, s]),
                    "upper": float(q[2, s]),
                }
            )

    with (out_dir / "bands.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin", "cell_center", "lower", "median", "upper", "truth"])
        for row in band_rows:
            writer.writerow(
                [
                    row["bin"],
                    f"{row['cell_center']:.10g}",
                    f"{row['lower']:.10g}",
                    f"{row['median']:.10g}",
                    f"{row['upper']:.10g}",
                    row["truth"],
                ]
            )
    with (out_dir / "abundance_path.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin", "step", "lower", "median", "upper"])
        for row in abundance_rows:
            writer.writerow(
                [
                    row["bin"],
                    row["step"],
                    f"{row['lower']:.10g}",
                    f"{row['median']:.10g}",
                    f"{row['upper']:.10g}",
                ]
            )

    settings = {
        "horizon": steps,
        "grid": [grid.lower, grid.upper, grid.cells],
        "bins": [binning.n_temp, binning.n_precip],
        "covariate_mode": mode,
        "bandwidth": bandwidth,
    }
    inputs = {
        "chain": chain_path,
        "chain_meta": meta_path,
        "patterns": patterns_path,
        "climate": climate_path,
    }
    if args.config:
        inputs["config"] = args.config
    _write_manifest(
        out_dir, "project", settings, inputs, ["bands.csv", "abundance_path.csv"]
    )
    print(f"projected {steps} steps for {len(set(r['bin'] for r in band_rows))} bins")
    return 0


def cmd_summarize(args) -> int:
    res = _Resolver(args.config)
    chain_path, meta_path = _chain_paths(args)
    chain = read_chain(chain_path, meta_path)
    out_dir = Path(args.out)
    _prepare_out(out_dir, args.overwrite)
    rows = [
        {"param": s.name, "mean": s.mean, "lower": s.lower, "upper": s.upper}
        for s in summarize(chain)
    ]
    _write_summary(rows, out_dir)
    outputs = ["summary.csv", "summary.txt"]
    inputs = {"chain": chain_path, "chain_meta": meta_path}

    if args.patterns and args.climate:
        panel, binning, patterns_path, climate_path, mode = _load_panel(args, res)
        grid = _resolve_grid(res, args)
        bandwidth = res.get("model", "bandwidth", float, None, args.bandwidth)
        ctx = build_fit_context(panel, grid, bandwidth=bandwidth)
        with (out_dir / "abundance.csv").open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                [
                    "year",
                    "bin",
                    "observed_per_plot",
                    "predicted_mean",
                    "lower",
                    "median",
                    "upper",
                ]
            )
            for row in abundance_summary(chain, ctx):
                writer.writerow(
                    [
                        row["year"],
                        row["bin"],
                        f"{row['observed_per_plot']:.10g}",
                        f"{row['predicted_mean']:.10g}",
                        f"{row['lower']:.10g}",
                        f"{row['median']:.10g}",
                        f"{row['upper']:.10g}",
                    ]
                )
        outputs.append("abundance.csv")
        inputs["patterns"] = patterns_path
        inputs["climate"] = climate_path
    if args.config:
        inputs["config"] = args.config
    _write_manifest(out_dir, "summarize", {}, inputs, outputs)
    print(f"summarized {chain.n_kept} kept samples")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ipmscale",
        description="Size-structured population models with climate scaling",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--grid", help="trait grid as L,U,B")
    common.add_argument("--overwrite", action="store_true", help="reuse a non-empty output directory")

    datalike = argparse.ArgumentParser(add_help=False)
    datalike.add_argument("--patterns", required=True, help="pattern CSV path")
    datalike.add_argument("--climate", required=True, help="climate CSV path")
    datalike.add_argument("--bins", help="climate bins as NTxNP")
    datalike.add_argument(
        "--covariate-mode",
        choices=["full", "temp", "standardized"],
        dest="covariate_mode",
        help="bin covariate construction",
    )
    datalike.add_argument("--bandwidth", type=float, help="KDE bandwidth override")

    p_sim = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--missing", type=float, help="missing fraction per bin-year")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", parents=[common, datalike], help="fit the model by MCMC")
    p_fit.add_argument("--out", required=True, help="output directory")
    p_fit.add_argument("--iterations", type=int, help="MCMC iterations")
    p_fit.add_argument("--burn-in", type=int, dest="burn_in", help="burn-in iterations")
    p_fit.add_argument("--thin", type=int, help="thinning interval")
    p_fit.add_argument("--chains", type=int, help="number of chains")
    p_fit.add_argument("--q-max", type=float, dest="q_max", help="survival ceiling")
    p_fit.add_argument(
        "--delta-max", type=float, dest="delta_max", help="fix delta0 = log(delta_max)"
    )
    p_fit.add_argument(
        "--estimate-delta1",
        action="store_true",
        dest="estimate_delta1",
        help="estimate the recruitment decay rate",
    )
    p_fit.add_argument(
        "--gp-family", choices=["exponential", "matern32"], dest="gp_family"
    )
    p_fit.add_argument(
        "--train-years",
        type=int,
        dest="train_years",
        help="restrict fitting to the first N years",
    )
    p_fit.set_defaults(func=cmd_fit)

    p_proj = sub.add_parser(
        "project", parents=[common, datalike], help="project posterior intensity bands"
    )
    p_proj.add_argument("--chain", required=True, help="chain CSV path")
    p_proj.add_argument("--chain-meta", dest="chain_meta", help="chain meta JSON path")
    p_proj.add_argument("--out", required=True, help="output directory")
    p_proj.add_argument("--horizon", type=int, help="projection steps (default 9)")
    p_proj.set_defaults(func=cmd_project)

    p_sum = sub.add_parser("summarize", parents=[common], help="summarize a fitted chain")
    p_sum.add_argument("--chain", required=True, help="chain CSV path")
    p_sum.add_argument("--chain-meta", dest="chain_meta", help="chain meta JSON path")
    p_sum.add_argument("--patterns", help="pattern CSV for abundance tables")
    p_sum.add_argument("--climate", help="climate CSV for abundance tables")
    p_sum.add_argument("--bins", help="climate bins as NTxNP")
    p_sum.add_argument(
        "--covariate-mode",
        choices=["full", "temp", "standardized"],
        dest="covariate_mode",
    )
    p_sum.add_argument("--bandwidth", type=float)
    p_sum.add_argument("--out", required=True, help="output directory")
    p_sum.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, DomainError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (ConvergenceError, RuntimeError, ArithmeticError, OSError) as exc:
        sys.stderr.write(f"runtime error: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
