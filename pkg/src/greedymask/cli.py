"""Command-line entry point.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
failure (non-finite values during reconstruction or scoring).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import CandidateSpace, CartesianMask, ImageStack, RngPolicy
from .harness import (BASELINE_KINDS, BaselineConfig, ConfigError, ExperimentConfig, ExperimentError,
                      baseline_mask, emit_curves, evaluate_masks, initial_mask, load_dataset, make_oracle,
                      rate_budgets, run_experiment, simulate_policies, split_dataset, summarize)
from .optimize import check_diminishing_returns
from .phantoms import PHANTOM_KINDS, PhantomSpec, generate_phantoms
from .transform import psf, psf_sidelobe_ratio

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
log = logging.getLogger("greedymask")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", type=Path, default=d, help="experiment JSON")
    p.add_argument("--seed", type=int, default=d, help="unsigned 64-bit seed (overrides the config)")
    p.add_argument("--out", type=Path, default=d, help="output directory")
    p.add_argument("--threads", type=int, default=d, help="worker threads for oracle evaluation")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greedymask", parents=[_global_flags(False)],
                                     description="Greedy learning-based k-space mask design.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    g = [_global_flags(True)]

    sub.add_parser("optimize", parents=g, help="optimize a mask and evaluate it against baselines")

    p = sub.add_parser("evaluate", parents=g, help="score a stored mask on the test split")
    p.add_argument("--mask", type=Path, required=True)
    p.add_argument("--name", default=None, help="label in the curves (default: file stem)")

    p = sub.add_parser("baseline", parents=g, help="generate a baseline mask")
    p.add_argument("--kind", choices=BASELINE_KINDS, required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--dims", type=int, nargs=3, metavar=("H", "W", "T"), default=None,
                   help="mask dimensions when no config is given")
    p.add_argument("--orientation", choices=("rows", "columns"), default=None)
    p.add_argument("--decay", type=float, default=4.0)
    p.add_argument("--width", type=float, default=0.15)
    p.add_argument("--center-lines", type=int, default=2)
    p.add_argument("--candidates", type=int, default=20)

    sub.add_parser("policy-sim", parents=g, help="simulate sequential acquisition policies")

    p = sub.add_parser("diagnose", parents=g, help="PSF and diminishing-returns reports")
    p.add_argument("--mask", type=Path, default=None)
    p.add_argument("--submodularity-trials", type=int, default=0)

    p = sub.add_parser("phantom", parents=g, help="write a synthetic dataset")
    p.add_argument("--kind", choices=PHANTOM_KINDS, default="shepp_logan")
    p.add_argument("--dims", type=int, nargs=3, metavar=("H", "W", "T"), default=(64, 64, 1))
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--shift", type=float, default=0.0)
    p.add_argument("--rotation", type=float, default=0.0)
    return parser


def _config(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError(f"'{args.command}' requires --config")
    cfg = ExperimentConfig.load(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.threads is not None:
        over["threads"] = args.threads
    try:
        return dataclasses.replace(cfg, **over) if over else cfg
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _out(args) -> Path:
    if args.out is None:
        raise ConfigError(f"'{args.command}' requires --out")
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))


def cmd_optimize(args) -> int:
    cfg = _config(args)
    res = run_experiment(cfg, _out(args))
    print(json.dumps(res["summary"], indent=2))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _out(args)
    _, test = split_dataset(cfg, load_dataset(cfg))
    mask = CartesianMask.load(args.mask)
    if (mask.h, mask.w, mask.t) != test.shape:
        raise ConfigError(f"mask dims {(mask.h, mask.w, mask.t)} do not match data {test.shape}")
    budgets = [b for b in rate_budgets(cfg.rate_grid, mask.total_lines) if b <= len(mask)]
    if not budgets:
        raise ConfigError("mask is smaller than every budget of the rate grid")
    rows = evaluate_masks(cfg, test, {b: mask.prefix(b) for b in budgets}, args.name or args.mask.stem)
    emit_curves(rows, out / "curves")
    summary = summarize(rows)
    _dump(out / "curves" / "summary.json", summary)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_baseline(args) -> int:
    out = _out(args)
    if args.config is not None:
        cfg = _config(args)
        dims = load_dataset(cfg).shape
        orientation = args.orientation or cfg.forward.orientation
        seed = cfg.seed
    elif args.dims is not None:
        dims, orientation, seed = tuple(args.dims), args.orientation or "rows", args.seed or 0
    else:
        raise ConfigError("baseline needs --config or --dims")
    try:
        spec = BaselineConfig(kind=args.kind, decay=args.decay, width=args.width,
                              center_lines=args.center_lines, n_candidates=args.candidates)
        rng = RngPolicy(seed).generator(f"baseline-{spec.label}", args.budget)
        mask = baseline_mask(spec, args.budget, dims, orientation, rng)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    mask.save(out / f"{spec.label}_{args.budget}.json")
    _dump(out / f"{spec.label}_{args.budget}.meta.json", {
        "baseline": dataclasses.asdict(spec), "budget": args.budget, "dims_hwt": list(dims),
        "orientation": orientation, "seed": seed, "stream": [f"baseline-{spec.label}", args.budget],
        "version": __version__, "psf_sidelobe_ratio": psf_sidelobe_ratio(mask),
    })
    print(out / f"{spec.label}_{args.budget}.json")
    return EXIT_OK


def cmd_policy_sim(args) -> int:
    cfg = _config(args)
    if not cfg.policies:
        raise ConfigError("config lists no policies")
    out = _out(args)
    _, test = split_dataset(cfg, load_dataset(cfg))
    init = initial_mask(cfg, test.shape)
    budgets = rate_budgets(cfg.rate_grid, init.total_lines)
    replay = init
    if "fixed_replay" in cfg.policies:
        path = out / "masks" / f"{cfg.optimizer.kind}.json"
        if not path.exists():
            raise ConfigError(f"fixed_replay needs an optimized mask at {path} (run 'optimize' first)")
        replay = CartesianMask.load(path)
    rows = simulate_policies(cfg, test, replay, budgets, out / "traces")
    # kept apart from the optimize curves so neither run clobbers the other
    emit_curves(rows, out / "policy_curves")
    print(json.dumps(summarize(rows), indent=2))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    out = _out(args)
    report = {}
    if args.mask is not None:
        mask = CartesianMask.load(args.mask)
        ImageStack(psf(mask)).save(out / "psf.bin")
        report["psf_sidelobe_ratio"] = psf_sidelobe_ratio(mask)
        report["lines"] = len(mask)
        report["sampling_rate"] = len(mask) / mask.total_lines
    if args.submodularity_trials:
        cfg = _config(args)
        train, _ = split_dataset(cfg, load_dataset(cfg))
        h, w, t = train.shape
        space = CandidateSpace.from_mask_dims(h, w, t, cfg.budget, cfg.forward.orientation)
        rng = RngPolicy(cfg.seed).generator("diagnose-submodularity")
        report["diminishing_returns"] = check_diminishing_returns(
            make_oracle(cfg, train), space, args.submodularity_trials, rng)
    if not report:
        raise ConfigError("diagnose needs --mask and/or --submodularity-trials")
    _dump(out / "diagnose.json", report)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_phantom(args) -> int:
    out = _out(args)
    h, w, t = args.dims
    try:
        spec = PhantomSpec(args.kind, h, w, t, args.shift, args.rotation, args.count)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    seed = args.seed or 0
    generate_phantoms(spec, RngPolicy(seed).generator("phantoms")).save(out)
    _dump(out / "phantoms.json", {"spec": spec.to_json(), "seed": seed, "stream": "phantoms"})
    print(out)
    return EXIT_OK


COMMANDS = {"optimize": cmd_optimize, "evaluate": cmd_evaluate, "baseline": cmd_baseline,
            "policy-sim": cmd_policy_sim, "diagnose": cmd_diagnose, "phantom": cmd_phantom}


def _is_numeric(exc: BaseException) -> bool:
    return isinstance(exc, (FloatingPointError, ArithmeticError, np.linalg.LinAlgError))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if _is_numeric(exc.cause) else 1
    except Exception as exc:
        if _is_numeric(exc):
            print(f"numeric failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        raise


if __name__ == "__main__":
    sys.exit(main())
