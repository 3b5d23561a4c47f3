"""Command-line interface.

One subcommand per experiment plus two utilities: haar-sample dumps raw
fundamental-domain draws, targets tabulates the closed-form limit laws.
Reports go to stdout unless --out names a directory, in which case the
serialized report, the backing CSV, and (by default) rendered figures
land there. Exit codes: 0 success, 2 config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .config import EXPERIMENTS, OBSERVABLE_NAMES, ExperimentConfig, load_config
from .engine import DOMAIN_MARGINAL
from .errors import ConfigError, FlowmaxError, NumericError
from .laws import GumbelLaw, kth_target_cdf, siegel_constant
from .reporting import (
    GrowthHypotheses,
    _atomic_write,
    _csv_text,
    emit_report,
    execute_experiment,
    write_csv,
    write_report,
)
from .sampling import Seed, _sample_fd_batch, derive_subseed, make_rng

_EXPERIMENT_COMMANDS = tuple(e for e in EXPERIMENTS)


def _parse_flow(text: str) -> tuple:
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"flow: cannot parse '{text}' as comma-separated "
                          "floats")
    return parts


def _parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise ConfigError(f"grid: expected start:stop:step, got '{text}'")
    if step <= 0 or stop < start:
        raise ConfigError(f"grid: empty range '{text}'")
    return np.round(np.arange(start, stop + 0.5 * step, step), 12)


def _add_experiment_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="config file (key = value lines)")
    sub.add_argument("--seed", type=int, help="master seed (u64)")
    sub.add_argument("--samples", type=int, help="trajectory count")
    sub.add_argument("--q", type=float, help="sparse time ratio (> 1)")
    sub.add_argument("--n", type=int, help="window start; block is [n, 2n]")
    sub.add_argument("--k", type=int, help="order of the maximum")
    sub.add_argument("--m0", type=float, help="first sample time")
    sub.add_argument("--v", type=float, help="tail exponent override")
    sub.add_argument("--observable", choices=OBSERVABLE_NAMES)
    sub.add_argument("--flow", help="diagonal exponents, e.g. 0.5,-0.5")
    sub.add_argument("--base-point", dest="base_point",
                     help="json frame for distance observables")
    sub.add_argument("--out", help="output directory (default: stdout)")
    sub.add_argument("--format", choices=("json", "csv", "text"),
                     default="json")
    sub.add_argument("--workers", type=int, default=1)
    sub.add_argument("--no-plot", action="store_true",
                     help="skip figure rendering")


def _build_config(args, experiment: str) -> ExperimentConfig:
    overrides = {"experiment": experiment}
    for field in ("seed", "samples", "q", "n", "k", "m0", "v",
                  "observable", "base_point", "out"):
        value = getattr(args, field)
        if value is not None:
            overrides[field] = value
    if args.flow is not None:
        overrides["flow"] = _parse_flow(args.flow)
    if args.config is not None:
        config = load_config(args.config, overrides=overrides)
    else:
        config = dataclasses.replace(ExperimentConfig(), **overrides)
    config.validate()
    return config


def _deliver(bundle, out: str | None, format: str, no_plot: bool) -> int:
    if out is None:
        sys.stdout.write(emit_report(bundle, format))
        return 0
    os.makedirs(out, exist_ok=True)
    paths = [write_report(bundle, out, format)]
    csv_path = write_csv(bundle, out)
    if csv_path is not None:
        paths.append(csv_path)
    if not no_plot and bundle.columns is not None:
        from .figures import render_figures

        paths.extend(render_figures(bundle, out))
    for path in paths:
        print(path)
    return 0


def _run_experiment(args) -> int:
    config = _build_config(args, args.command)
    if args.workers < 1:
        raise ConfigError(f"workers: must be >= 1, got {args.workers}")
    hypotheses = None
    if args.command == "check-conditions":
        hypotheses = GrowthHypotheses(
            gamma=args.gamma,
            sobolev_k=args.sobolev,
            mixing_delta=args.mixing_delta,
            group_dim=args.group_dim,
        )
    bundle = execute_experiment(config, workers=args.workers,
                                hypotheses=hypotheses)
    return _deliver(bundle, config.out, args.format, args.no_plot)


def _run_haar_sample(args) -> int:
    if args.samples < 1:
        raise ConfigError(f"samples: must be >= 1, got {args.samples}")
    if not 0 <= args.seed < 2**64:
        raise ConfigError(f"seed: must fit in u64, got {args.seed}")
    rng = make_rng(derive_subseed(Seed(args.seed), DOMAIN_MARGINAL))
    x, y, theta, _ = _sample_fd_batch(rng, args.samples)
    delta = 0.5 * np.log(y)
    text = _csv_text((("x", x), ("y", y), ("theta", theta),
                      ("delta", delta)))
    if args.out is None:
        sys.stdout.write(text)
        return 0
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "haar-sample.csv")
    _atomic_write(path, text)
    paths = [path]
    if not args.no_plot:
        from .figures import render_fd_scatter

        paths.append(render_fd_scatter(x, y, args.out))
    for path in paths:
        print(path)
    return 0


def _run_targets(args) -> int:
    w = args.w if args.w is not None else siegel_constant(2)
    law = GumbelLaw(w=w, v=args.v)
    grid = _parse_grid(args.grid)
    cdf = kth_target_cdf(grid, law, args.k)
    columns = (("r", grid), ("cdf", cdf))
    if args.format == "json":
        payload = {
            "law": {"w": law.w, "v": law.v, "k": args.k},
            "r": [float(v) for v in grid],
            "cdf": [float(v) for v in cdf],
        }
        text = json.dumps(payload, indent=2) + "\n"
    elif args.format == "csv":
        text = _csv_text(columns)
    else:
        lines = [f"k-th maximum law: w={law.w:.6g} v={law.v:.6g} k={args.k}"]
        lines += [f"  {r:10.4f}  {c:12.8f}" for r, c in zip(grid, cdf)]
        text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
        return 0
    os.makedirs(args.out, exist_ok=True)
    ext = {"json": "json", "csv": "csv", "text": "txt"}[args.format]
    path = os.path.join(args.out, f"targets.{ext}")
    _atomic_write(path, text)
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowmax",
        description="Extreme-value experiments for sparse diagonal flows "
                    "on spaces of lattices.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    for name in _EXPERIMENT_COMMANDS:
        sub = subs.add_parser(name, help=f"run the {name} experiment")
        _add_experiment_flags(sub)
        if name == "check-conditions":
            sub.add_argument("--gamma", type=float, default=None,
                             help="top adjoint exponent hypothesis")
            sub.add_argument("--sobolev", type=int, default=2)
            sub.add_argument("--mixing-delta", dest="mixing_delta",
                             type=float, default=1.0)
            sub.add_argument("--group-dim", dest="group_dim", type=int,
                             default=3)
        sub.set_defaults(handler=_run_experiment)

    haar = subs.add_parser("haar-sample",
                           help="dump raw fundamental-domain draws")
    haar.add_argument("--seed", type=int, default=0)
    haar.add_argument("--samples", type=int, default=10000)
    haar.add_argument("--out", help="output directory (default: stdout)")
    haar.add_argument("--no-plot", action="store_true")
    haar.set_defaults(handler=_run_haar_sample)

    targets = subs.add_parser("targets",
                              help="tabulate the closed-form limit laws")
    targets.add_argument("--w", type=float, default=None,
                         help="scale constant (default: the d=2 lattice "
                              "constant)")
    targets.add_argument("--v", type=float, default=2.0)
    targets.add_argument("--k", type=int, default=1)
    targets.add_argument("--grid", default="-2:3:0.05",
                         help="start:stop:step")
    targets.add_argument("--out", help="output directory (default: stdout)")
    targets.add_argument("--format", choices=("json", "csv", "text"),
                         default="csv")
    targets.set_defaults(handler=_run_targets)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except FlowmaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
