"""Command line front end.

Subcommands:
  scan-pathdiff   upper-vs-lower edge path difference scan over a node grid
  bias-table      build and serialize a bias table
  run             Monte-Carlo estimator comparison, CSV outputs
  solve           single-shot estimate from a ranges file

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .bias import BiasTable, FLOORWISE, build_bias_table
from .config import default_anchors, default_building, load_scenario
from .errors import ConfigError, PositioningError
from .estimators import (
    IppaVariant,
    ippa_estimate,
    lls_estimate,
    nls_estimate,
)
from .harness import ESTIMATOR_NAMES, ExperimentConfig, export_report, run_experiment
from .measurement import NoiseModel


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffpos",
        description="Through-window diffraction path modeling and NLOS-aware 3D positioning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="scenario file (key = value text)")
        p.add_argument("--seed", type=int, default=0, help="root RNG seed")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("scan-pathdiff", help="scan |upper - lower| path differences")
    add_common(p)
    p.add_argument("--spacing", type=float, default=0.05, help="grid spacing, m")
    p.add_argument("--bin-width", type=float, default=0.01, help="histogram bin width, m")
    p.add_argument("--rows", action="store_true", help="also dump per-point rows CSV")

    p = sub.add_parser("bias-table", help="build and serialize a bias table")
    add_common(p)
    p.add_argument("--samples", type=int, default=100_000, help="draws per (anchor, floor)")
    p.add_argument("--bias-mode", choices=("floorwise", "composite"), default=FLOORWISE)
    p.add_argument("--histograms", action="store_true", help="also write histogram rows")

    p = sub.add_parser("run", help="Monte-Carlo estimator comparison")
    add_common(p)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--sigma", type=float, default=0.1, help="range noise std dev, m")
    p.add_argument("--edge-prob", type=float, default=0.5,
                   help="per-anchor probability of the upper edge")
    p.add_argument("--bias-mode", choices=("floorwise", "composite"), default=FLOORWISE)
    p.add_argument("--estimators", default=",".join(ESTIMATOR_NAMES),
                   help="comma separated subset of " + ",".join(ESTIMATOR_NAMES))
    p.add_argument("--bias-table", help="pre-built bias table CSV (skips recomputation)")
    p.add_argument("--bias-samples", type=int, default=100_000)

    p = sub.add_parser("solve", help="single-shot estimate from a ranges file")
    p.add_argument("--config", help="scenario file (key = value text)")
    p.add_argument("--ranges", required=True,
                   help="text file with one range (m) per line, anchor order")
    p.add_argument("--estimator", choices=ESTIMATOR_NAMES, default="nls")
    p.add_argument("--bias-table", help="bias table CSV (required for ippa-idmin/idmean)")
    p.add_argument("--out", help="also write estimate.csv here")
    return parser


def _scenario(args):
    if args.config:
        return load_scenario(args.config)
    return default_building(), default_anchors()


def _read_ranges(path) -> np.ndarray:
    values = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            for tok in line.replace(",", " ").split():
                try:
                    values.append(float(tok))
                except ValueError:
                    raise ConfigError(f"{path}: not a number: {tok!r}") from None
    if not values:
        raise ConfigError(f"{path}: no range values found")
    return np.asarray(values)


def _cmd_scan_pathdiff(args) -> int:
    from .diffraction import path_difference_scan

    building, anchors = _scenario(args)
    os.makedirs(args.out, exist_ok=True)
    rows_path = os.path.join(args.out, "pathdiff_rows.csv") if args.rows else None
    scan = path_difference_scan(
        building, anchors, args.spacing, bin_width=args.bin_width, rows_path=rows_path
    )
    hist_path = os.path.join(args.out, "pathdiff_hist.csv")
    scan.write_histogram_csv(hist_path)
    print(f"evaluated {scan.n_evaluated} grid points ({scan.n_skipped} skipped)")
    print(f"max |upper - lower| difference: {scan.max_diff:.4f} m")
    print(f"histogram: {hist_path}")
    return 0


def _cmd_bias_table(args) -> int:
    building, anchors = _scenario(args)
    table = build_bias_table(
        building, anchors, args.bias_mode, n_samples=args.samples, seed=args.seed
    )
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "bias_table.csv")
    hist = os.path.join(args.out, "bias_table_hist.csv") if args.histograms else None
    table.to_csv(path, histogram_path=hist)
    print(f"bias table ({args.bias_mode}): {path}")
    return 0


def _cmd_run(args) -> int:
    building, anchors = _scenario(args)
    estimators = tuple(e.strip() for e in args.estimators.split(",") if e.strip())
    config = ExperimentConfig(
        building=building,
        anchors=anchors,
        noise=NoiseModel(sigma=args.sigma),
        n_trials=args.trials,
        edge_prob=args.edge_prob,
        bias_mode=args.bias_mode,
        estimators=estimators,
        seed=args.seed,
        bias_samples=args.bias_samples,
        output_dir=args.out,
    )
    table = BiasTable.from_csv(args.bias_table) if args.bias_table else None
    report = run_experiment(config, bias_table=table)
    files = export_report(report, args.out)
    for name, res in report.results.items():
        print(
            f"{name}: rmse_3d={res.rmse_3d:.3f} m rmse_z={res.rmse_z:.3f} m "
            f"floor_acc={res.floor_accuracy:.3f} failures={res.failures}"
        )
    print(f"wrote {len(files)} files to {args.out}")
    return 0


def _cmd_solve(args) -> int:
    building, anchors = _scenario(args)
    ranges = _read_ranges(args.ranges)
    if ranges.size != anchors.m:
        raise ConfigError(
            f"expected {anchors.m} ranges (one per anchor), got {ranges.size}"
        )
    name = args.estimator
    if name == "lls":
        est = lls_estimate(ranges, anchors, building)
    elif name == "nls":
        est = nls_estimate(ranges, anchors, building)
    else:
        variant = IppaVariant(name.removeprefix("ippa-"))
        table = None
        if variant.stat is not None:
            if not args.bias_table:
                raise ConfigError(f"{name} requires --bias-table")
            table = BiasTable.from_csv(args.bias_table)
        est = ippa_estimate(ranges, anchors, building, table, variant)
    line = (
        f"{est.x!r},{est.y!r},{est.floor},{est.z!r},{est.residual!r},"
        f"{est.iterations},{est.converged}"
    )
    print("x_m,y_m,floor,z_m,residual,iterations,converged")
    print(line)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "estimate.csv")
        with open(path, "w") as fh:
            fh.write("x_m,y_m,floor,z_m,residual,iterations,converged\n")
            fh.write(line + "\n")
        print(f"estimate: {path}")
    return 0


_COMMANDS = {
    "scan-pathdiff": _cmd_scan_pathdiff,
    "bias-table": _cmd_bias_table,
    "run": _cmd_run,
    "solve": _cmd_solve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PositioningError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
