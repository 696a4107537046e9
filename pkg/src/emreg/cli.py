"""Command-line entry points: register, synth, bench, eval."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .bench import BenchmarkGrid, resolve_base, run_benchmark, score_report
from .config import RegistrationConfig, RegistrationReport
from .icp import icp_baseline
from .io import load_pointset, save_pointset
from .nonrigid import register_nonrigid
from .rigid import register_affine, register_rigid
from .synth import DegradationSpec, GroundTruth, MissingRegion, synth_pair

_RUNNERS = {
    "rigid": register_rigid,
    "affine": register_affine,
    "nonrigid": register_nonrigid,
    "icp": icp_baseline,
}


def _parse_missing(text: str):
    regions = []
    for chunk in text.split(","):
        if not chunk:
            continue
        target, axis, side, fraction = chunk.split(":")
        regions.append(MissingRegion(target=target, axis=int(axis), side=side, fraction=float(fraction)))
    return tuple(regions)


def _cmd_register(args) -> int:
    x = load_pointset(args.x_file)
    y = load_pointset(args.y_file)
    config = RegistrationConfig(
        w=args.w, lam=args.lam, beta=args.beta, tol=args.tol, max_iters=args.max_iters,
        estimate_scale=not args.fix_scale, fast=args.fast, lowrank=args.lowrank,
        seed=args.seed,
    )
    report = _RUNNERS[args.method](x, y, config)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    print(f"{args.method}: converged={report.converged} iterations={report.iterations} "
          f"sigma2={report.sigma2:.6e} stop={report.stop_reason}")
    return 0


def _cmd_synth(args) -> int:
    base = resolve_base(args.base, args.n)
    spec = DegradationSpec(
        deform_std=args.deform, noise_std=args.noise, outlier_count=args.outliers,
        outlier_std=args.outlier_std, missing=_parse_missing(args.missing),
        rotation_deg=args.rotation, scale=args.scale, seed=args.seed,
    )
    x, y, truth = synth_pair(spec, base, args.kind)
    prefix = args.out_prefix
    x_file, y_file = f"{prefix}_x.txt", f"{prefix}_y.txt"
    save_pointset(x, x_file)
    save_pointset(y, y_file)
    payload = {
        "kind": args.kind,
        "truth": truth.to_dict(),
        "x_file": os.path.basename(x_file),
        "y_file": os.path.basename(y_file),
    }
    with open(f"{prefix}_truth.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    print(f"wrote {x_file} ({x.shape[0]} pts), {y_file} ({y.shape[0]} pts), {prefix}_truth.json")
    return 0


def _cmd_bench(args) -> int:
    with open(args.grid, "r", encoding="utf-8") as fh:
        grid_dict = json.load(fh)
    if args.methods:
        grid_dict["methods"] = args.methods.split(",")
    if args.trials:
        grid_dict["trials"] = args.trials
    grid = BenchmarkGrid.from_dict(grid_dict)
    report = run_benchmark(grid)
    report.save(args.out)
    print(report.to_table(), end="")
    print(f"benchmark written to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    with open(args.report, "r", encoding="utf-8") as fh:
        report = RegistrationReport.from_json(fh.read())
    with open(args.truth, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    truth = GroundTruth.from_dict(payload["truth"])
    base_dir = os.path.dirname(os.path.abspath(args.truth))
    x = load_pointset(os.path.join(base_dir, payload["x_file"]))
    y = load_pointset(os.path.join(base_dir, payload["y_file"]))
    metrics = score_report(report, truth, x, y)
    print(json.dumps(metrics, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emreg", description="Probabilistic point-set registration")
    sub = parser.add_subparsers(dest="command", required=True)

    reg = sub.add_parser("register", help="align a model set onto a data set")
    reg.add_argument("--method", choices=sorted(_RUNNERS), default="rigid")
    reg.add_argument("--w", type=float, default=0.0, help="outlier weight in [0, 1)")
    reg.add_argument("--lambda", dest="lam", type=float, default=2.0, help="smoothness trade-off")
    reg.add_argument("--beta", type=float, default=2.0, help="smoothness kernel width")
    reg.add_argument("--tol", type=float, default=1e-8)
    reg.add_argument("--max-iters", type=int, default=150)
    reg.add_argument("--fast", choices=("exact", "fgt", "auto"), default="exact")
    reg.add_argument("--lowrank", type=int, default=None, help="kernel rank cap for the non-rigid solve")
    reg.add_argument("--fix-scale", action="store_true", help="keep scale at 1 in the rigid step")
    reg.add_argument("--seed", type=int, default=None)
    reg.add_argument("--out", default=None, help="write the JSON report here")
    reg.add_argument("x_file")
    reg.add_argument("y_file")
    reg.set_defaults(func=_cmd_register)

    syn = sub.add_parser("synth", help="generate a seeded degraded pair")
    syn.add_argument("--kind", choices=("rigid", "affine", "nonrigid"), default="rigid")
    syn.add_argument("--deform", type=float, default=0.0)
    syn.add_argument("--noise", type=float, default=0.0)
    syn.add_argument("--outliers", type=int, default=0)
    syn.add_argument("--outlier-std", type=float, default=1.0)
    syn.add_argument("--missing", default="", help="comma list of target:axis:side:fraction")
    syn.add_argument("--rotation", type=float, default=0.0, help="degrees")
    syn.add_argument("--scale", type=float, default=1.0)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--base", default="fish", help="'fish', 'cloud' or a point-set file")
    syn.add_argument("--n", type=int, default=91, help="size of a built-in base set")
    syn.add_argument("--out-prefix", required=True)
    syn.set_defaults(func=_cmd_synth)

    ben = sub.add_parser("bench", help="run a degradation sweep")
    ben.add_argument("--grid", required=True, help="JSON grid description")
    ben.add_argument("--methods", default=None, help="comma list overriding the grid")
    ben.add_argument("--trials", type=int, default=None)
    ben.add_argument("--out", required=True, help="output directory")
    ben.set_defaults(func=_cmd_bench)

    ev = sub.add_parser("eval", help="recompute metrics of a report against a truth file")
    ev.add_argument("--report", required=True)
    ev.add_argument("--truth", required=True)
    ev.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
