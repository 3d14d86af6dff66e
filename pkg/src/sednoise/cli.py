"""Command-line entry point: ``sednoise <subcommand> ...``.

Exit codes: 0 success, 1 input parse/validation error, 2 bad arguments,
3 undefined metric, 4 failed self-check.

Every output file ``X`` is accompanied by ``X.manifest.json`` recording the
resolved configuration, the arguments, and SHA-256 digests of inputs and
output. ``sednoise replay X.manifest.json`` re-runs it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .annotations import (AnnotationError, NoiseKind, parse_clip_table, parse_soft_labels,
                          parse_strong_labels, serialize_clip_table, serialize_strong_labels)
from .losses import LOSSES, GradientCheckError, LossParams, grad_check, loss_fn
from .metrics import DEFAULT_SEGMENT_LENGTH, UndefinedMetricError, evaluate, metrics_report
from .noise import check_rate, inject, parse_grid, sweep
from .rng import MAX_SEED
from .soft import check_omega, check_threshold, grids_to_annotations, BinarizationConfig
from .theory import deletion_f1_curve, format_curve, insertion_f1_curve, threshold_er_curve

log = logging.getLogger("sednoise")

EXIT_OK, EXIT_INPUT, EXIT_USAGE, EXIT_METRIC, EXIT_SELFCHECK = 0, 1, 2, 3, 4

GRAD_TOLERANCE = 1e-6
GRAD_STEP = 1e-6

DEFAULT_CURVE_GRIDS = {
    "deletion-f1": "0:1:0.05",
    "insertion-f1": "0:2:0.1",
    "threshold-er": "0.1:0.9:0.05",
}
CURVE_HEADERS = {
    "deletion-f1": ("deletion_ratio", "f1"),
    "insertion-f1": ("insertion_ratio", "f1"),
    "threshold-er": ("threshold", "er"),
}


class UsageError(Exception):
    pass


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_text(path) -> str:
    with open(path, encoding="utf-8", newline="") as fh:
        return fh.read()


def write_output(path, text: str, manifest: dict):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    record = dict(manifest)
    record["output"] = {"path": str(path), "sha256": sha256_file(path)}
    with open(f"{path}.manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")


def make_manifest(subcommand: str, config: dict, argv: list[str], inputs: dict) -> dict:
    return {
        "tool": "sednoise",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "argv": argv,
        "inputs": {role: {"path": str(p), "sha256": sha256_file(p)}
                   for role, p in inputs.items() if p is not None},
    }


def _replay_argv(argv: list[str]) -> list[str]:
    # thread count does not change results, so it is left out of manifests
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--threads":
            skip = True
            continue
        if tok.startswith("--threads="):
            continue
        out.append(tok)
    return out


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _grid(text: str) -> list[float]:
    try:
        return parse_grid(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sednoise", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inject", help="write a noisy copy of a strong-label file")
    p.add_argument("kind", choices=[k.value for k in NoiseKind])
    p.add_argument("--labels", required=True, help="strong-label TSV")
    p.add_argument("--clips", required=True, help="clip-duration TSV")
    rate = p.add_mutually_exclusive_group(required=True)
    rate.add_argument("--rate", type=float,
                      help="noise rate (overlap rate for subjective noise)")
    rate.add_argument("--rate-grid", type=_grid, metavar="START:STOP:STEP",
                      help="sweep rates; --out is then a directory")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=_positive_int, default=1)

    p = sub.add_parser("binarize", help="threshold soft labels into strong labels")
    p.add_argument("--soft", required=True, help="soft-label TSV")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--threshold", type=float)
    mode.add_argument("--relax", type=float, metavar="OMEGA",
                      help="draw a per-clip threshold from [0.5-OMEGA, 0.5+OMEGA]")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--clips-out", help="also write the clip durations of the soft labels")
    p.add_argument("--threads", type=_positive_int, default=1)

    p = sub.add_parser("evaluate", help="segment-based ER / F1 of an estimate against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--clips", required=True)
    p.add_argument("--segment-length", type=float, default=DEFAULT_SEGMENT_LENGTH)
    p.add_argument("--percent", action="store_true", help="report F1 on a 0-100 scale")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=_positive_int, default=1)

    p = sub.add_parser("theory", help="closed-form curves as two-column TSV")
    p.add_argument("curve", choices=sorted(CURVE_HEADERS))
    p.add_argument("--grid", metavar="START:STOP:STEP")
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--soft", help="soft-label TSV (threshold-er only)")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=_positive_int, default=1)

    p = sub.add_parser("loss-fixtures", help="loss values and gradients for a list of cases")
    p.add_argument("--spec", required=True, help="JSON list of {op, y, p, params[, base]}")
    p.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


def cmd_inject(args, argv) -> int:
    kind = NoiseKind(args.kind)
    rates = [args.rate] if args.rate is not None else args.rate_grid
    try:
        for r in rates:
            check_rate(kind, r)
    except ValueError as err:
        raise UsageError(str(err)) from None
    aset = parse_strong_labels(read_text(args.labels), read_text(args.clips))
    inputs = {"labels": args.labels, "clips": args.clips}
    for r in rates:
        noisy = inject(aset, kind, r, args.seed, workers=args.threads)
        if args.rate is not None:
            out = args.out
        else:
            out = os.path.join(args.out, f"{kind.value}_{r:g}.tsv")
        config = {"kind": kind.value, "rate": r, "seed": args.seed}
        write_output(out, serialize_strong_labels(noisy),
                     make_manifest("inject", config, argv, inputs))
        log.info("%s rate %g: %d -> %d events, wrote %s", kind.value, r,
                 len(aset.events), len(noisy.events), out)
    return EXIT_OK


def cmd_binarize(args, argv) -> int:
    try:
        if args.threshold is not None:
            check_threshold(args.threshold)
            config = BinarizationConfig(threshold=args.threshold)
        else:
            check_omega(args.relax)
            config = BinarizationConfig(omega=args.relax, seed=args.seed)
    except ValueError as err:
        raise UsageError(str(err)) from None
    grids = parse_soft_labels(read_text(args.soft))
    hard = grids_to_annotations(config.apply(g) for g in grids)
    manifest = make_manifest("binarize", {"threshold": config.threshold, "omega": config.omega,
                                          "seed": config.seed}, argv, {"soft": args.soft})
    write_output(args.out, serialize_strong_labels(hard), manifest)
    if args.clips_out:
        write_output(args.clips_out, serialize_clip_table(hard.clips), manifest)
    return EXIT_OK


def cmd_evaluate(args, argv) -> int:
    if not args.segment_length > 0:
        raise UsageError("--segment-length must be positive")
    clips = parse_clip_table(read_text(args.clips))
    ref = parse_strong_labels(read_text(args.ref), clips)
    est = parse_strong_labels(read_text(args.est), clips)
    missing = set(ref.vocabulary) ^ set(est.vocabulary)
    if missing:
        log.warning("labels present in only one of reference/estimate: %s",
                    ", ".join(sorted(missing)))
    stats = evaluate(ref, est, args.segment_length, workers=args.threads)
    report = metrics_report(stats, percent=args.percent)
    manifest = make_manifest(
        "evaluate", {"segment_length": args.segment_length, "percent": args.percent}, argv,
        {"ref": args.ref, "est": args.est, "clips": args.clips})
    write_output(args.out, json.dumps(report, indent=2) + "\n", manifest)
    return EXIT_OK


def _curve_grid(args) -> list[float]:
    bounds = (args.start, args.stop, args.step)
    if args.grid is not None and any(b is not None for b in bounds):
        raise UsageError("use either --grid or --start/--stop/--step")
    try:
        if args.grid is not None:
            return parse_grid(args.grid)
        if any(b is not None for b in bounds):
            if any(b is None for b in bounds):
                raise UsageError("--start, --stop and --step go together")
            return sweep(*bounds)
        return parse_grid(DEFAULT_CURVE_GRIDS[args.curve])
    except ValueError as err:
        raise UsageError(f"invalid range: {err}") from None


def cmd_theory(args, argv) -> int:
    grid = _curve_grid(args)
    if args.curve == "threshold-er":
        if args.soft is None:
            raise UsageError("threshold-er needs --soft")
        if not all(0.0 < t < 1.0 for t in grid):
            raise UsageError("thresholds must lie in (0, 1)")
        rows = threshold_er_curve(parse_soft_labels(read_text(args.soft)), grid,
                                  workers=args.threads)
    elif args.soft is not None:
        raise UsageError("--soft only applies to threshold-er")
    elif args.curve == "deletion-f1":
        if not all(0.0 <= r <= 1.0 for r in grid):
            raise UsageError("deletion ratios must lie in [0, 1]")
        rows = deletion_f1_curve(grid)
    else:
        if not all(r >= 0.0 for r in grid):
            raise UsageError("insertion ratios must be >= 0")
        rows = insertion_f1_curve(grid)
    manifest = make_manifest("theory", {"curve": args.curve, "grid": grid}, argv,
                             {"soft": args.soft})
    write_output(args.out, format_curve(rows, CURVE_HEADERS[args.curve]), manifest)
    return EXIT_OK


def _fixture_record(i: int, rec) -> dict:
    if not isinstance(rec, dict):
        raise UsageError(f"record {i}: expected an object")
    op = rec.get("op")
    if op not in LOSSES:
        raise UsageError(f"record {i}: unknown op {op!r}")
    base = rec.get("base", "bce")
    try:
        params = LossParams(**rec.get("params", {}))
    except (TypeError, ValueError) as err:
        raise UsageError(f"record {i}: {err}") from None
    y, p = rec.get("y"), rec.get("p")
    if not isinstance(y, list) or not isinstance(p, list) or len(y) != len(p) or not y:
        raise UsageError(f"record {i}: y and p must be equal-length non-empty lists")
    if any(v not in (0, 1) for v in y):
        raise UsageError(f"record {i}: y must be multi-hot (0/1)")
    if any(not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0 for v in p):
        raise UsageError(f"record {i}: p must lie in [0, 1]")
    return {"op": op, "base": base if op == "srl" else None, "y": y, "p": p, "params": params}


def cmd_loss_fixtures(args, argv) -> int:
    try:
        spec = json.loads(read_text(args.spec))
    except json.JSONDecodeError as err:
        raise AnnotationError(f"{args.spec}: not valid JSON ({err})") from None
    records = spec.get("records") if isinstance(spec, dict) else spec
    if not isinstance(records, list):
        raise UsageError("spec must be a JSON list of records")
    cases = [_fixture_record(i, rec) for i, rec in enumerate(records)]

    out_records = []
    for i, case in enumerate(cases):
        params = case["params"]
        value, grad = loss_fn(case["op"], params, case["base"] or "bce")(case["y"], case["p"])
        err = grad_check(case["op"], case["y"], case["p"], params, GRAD_STEP,
                         base=case["base"] or "bce")
        if err > GRAD_TOLERANCE:
            raise GradientCheckError(
                f"record {i}: analytic gradient of {case['op']} is off by {err:.3g} "
                f"(tolerance {GRAD_TOLERANCE:g})")
        entry = {"op": case["op"]}
        if case["base"]:
            entry["base"] = case["base"]
        entry.update(y=case["y"], p=case["p"], params=params.as_dict(),
                     value=float(value), gradient=[float(g) for g in grad], grad_check=err)
        out_records.append(entry)
    manifest = make_manifest("loss-fixtures", {"h": GRAD_STEP, "tolerance": GRAD_TOLERANCE},
                             argv, {"spec": args.spec})
    body = {"version": __version__, "h": GRAD_STEP, "tolerance": GRAD_TOLERANCE,
            "records": out_records}
    write_output(args.out, json.dumps(body, indent=2) + "\n", manifest)
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    try:
        manifest = json.loads(read_text(args.manifest))
    except (OSError, json.JSONDecodeError) as err:
        raise AnnotationError(f"cannot read manifest {args.manifest}: {err}") from None
    for role, entry in manifest.get("inputs", {}).items():
        if sha256_file(entry["path"]) != entry["sha256"]:
            raise AnnotationError(f"input {role} ({entry['path']}) does not match its digest")
    code = main(manifest["argv"])
    if code != EXIT_OK:
        return code
    recorded = manifest.get("output")
    if recorded and sha256_file(recorded["path"]) != recorded["sha256"]:
        log.error("replayed output %s differs from the recorded digest", recorded["path"])
        return EXIT_SELFCHECK
    return EXIT_OK


COMMANDS = {
    "inject": cmd_inject,
    "binarize": cmd_binarize,
    "evaluate": cmd_evaluate,
    "theory": cmd_theory,
    "loss-fixtures": cmd_loss_fixtures,
    "replay": cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.WARNING, format="sednoise: %(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, _replay_argv(argv))
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"sednoise {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (AnnotationError, OSError) as err:
        print(f"sednoise {args.command}: {err}", file=sys.stderr)
        return EXIT_INPUT
    except UndefinedMetricError as err:
        print(f"sednoise {args.command}: {err}", file=sys.stderr)
        return EXIT_METRIC
    except GradientCheckError as err:
        print(f"sednoise {args.command}: {err}", file=sys.stderr)
        return EXIT_SELFCHECK
    except ValueError as err:
        # e.g. insertion on a class without instances
        print(f"sednoise {args.command}: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
