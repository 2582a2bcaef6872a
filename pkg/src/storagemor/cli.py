"""Command line entry point for the experiment driver."""

from __future__ import annotations

import argparse
import sys

from .exceptions import StorageMorError
from .experiments import ExperimentConfig, load_config, run_experiment


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="storagemor", description="Balanced truncation experiments for the storage model.")
    p.add_argument("--config", help="INI experiment file")
    p.add_argument("--grid-scale", type=float, dest="grid_scale", help="multiplier for h_x, h_y (desk grids)")
    p.add_argument("--orders", type=_ints, help="comma separated reduced orders")
    p.add_argument("--alpha", type=_floats, dest="alphas", help="comma separated selection thresholds")
    p.add_argument("--outputs", type=lambda s: tuple(s.split(",")), help="characteristics, e.g. M,F,O,B")
    p.add_argument("--n-p", type=int, dest="n_P", help="number of PHXs")
    p.add_argument("--schedule", choices=["charge_discharge", "waiting"])
    p.add_argument("--out-dir", dest="out_dir", help="directory for CSV/JSON artifacts")
    p.add_argument("--full-grid", action="store_true", default=None, dest="full_grid",
                   help="use the reference grid (slow, memory hungry)")
    p.add_argument("--scheme", choices=["euler", "trapezoid"])
    p.add_argument("--workers", type=int, help="threads for reduced simulations")
    p.add_argument("--stride", type=int, help="write every k-th time sample")
    return p


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    path = args.pop("config")
    overrides = {k: v for k, v in args.items() if v is not None}
    try:
        cfg = load_config(path, **overrides) if path else ExperimentConfig(**overrides)
        run_experiment(cfg)
    except StorageMorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
