"""Command-line surface: train, evaluate, sweep, gradcheck, report.

Data sources are either a track CSV path or a synthetic spec of the form
``synth:SEED:COUNT`` (optionally ``synth:SEED:COUNT:STEPS``).  On failure a
single machine-readable JSON error line goes to stderr and the exit code is
nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import load_tracks, synth_tracks
from .training import (
    TrainConfig,
    content_hash,
    evaluate,
    gradient_audit,
    load_checkpoint,
    merge_summaries,
    run_sweep,
    save_checkpoint,
    train,
    write_epochs_csv,
    write_manifest,
    write_summary_csv,
)


def _load_data(spec: str):
    """Returns (tracks, data_bytes_for_hash)."""
    if spec.startswith("synth:"):
        parts = spec.split(":")
        if len(parts) not in (3, 4):
            raise ValueError(f"synthetic data spec must be synth:SEED:COUNT[:STEPS], got {spec!r}")
        seed, count = int(parts[1]), int(parts[2])
        steps = int(parts[3]) if len(parts) == 4 else 24
        return synth_tracks(seed, count, steps), None
    return load_tracks(spec), Path(spec).read_bytes()


def _load_config(path: str | None, mode: str | None) -> TrainConfig:
    data = {}
    if path:
        with open(path, "r", encoding="ascii") as fh:
            data = json.load(fh)
    if mode:
        data["mode"] = mode
    return TrainConfig.from_dict(data)


def _cmd_train(args) -> int:
    config = _load_config(args.config, args.mode)
    tracks, data_bytes = _load_data(args.data)
    report, checkpoint = train(config, tracks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = content_hash(config.to_dict(), args.data, data_bytes)
    write_epochs_csv(report, out / "epochs.csv")
    write_summary_csv([report.summary_row()], out / "summary.csv")
    write_manifest(report, out / "manifest.json", digest)
    save_checkpoint(checkpoint, out / "checkpoint.json")
    print(f"mode={report.mode} trainable={report.trainable_count} "
          f"test_mae={report.test_mae} gc_mean_km={report.gc_mean_km} -> {out}")
    return 0


def _cmd_evaluate(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    tracks, data_bytes = _load_data(args.data)
    metrics = evaluate(checkpoint, tracks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    columns = ["mode", "trainable_count", "test_mae", "gc_mean_km", "gc_median_km", "test_samples"]
    write_summary_csv([metrics], out / "eval.csv", columns)
    digest = content_hash(checkpoint["config"], args.data, data_bytes)
    with open(out / "eval_manifest.json", "w", encoding="ascii", newline="\n") as fh:
        json.dump({"metrics": metrics, "input_hash": digest}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"gc_mean_km={metrics['gc_mean_km']} over {metrics['test_samples']} samples -> {out}")
    return 0


def _cmd_sweep(args) -> int:
    with open(args.grid, "r", encoding="ascii") as fh:
        grid = json.load(fh)
    data_spec = grid.get("data")
    if not data_spec:
        raise ValueError("grid JSON must carry a 'data' entry (csv path or synth spec)")
    tracks, data_bytes = _load_data(data_spec)
    digest = content_hash(grid, data_spec, data_bytes)
    rows = run_sweep(grid, tracks, Path(args.out), digest)
    failures = sum(1 for r in rows if r["status"] != "ok")
    print(f"{len(rows)} runs, {failures} failed -> {Path(args.out) / 'sweep.csv'}")
    return 0


def _cmd_gradcheck(args) -> int:
    result = gradient_audit(seed=args.seed)
    status = "PASS" if result["passed"] else "FAIL"
    print(f"gradient audit: {status} "
          f"(angles {result['max_rel_angles']:.3e}, mapping {result['max_rel_mapping']:.3e}, "
          f"tolerance {result['tolerance']:.0e})")
    return 0 if result["passed"] else 1


def _cmd_report(args) -> int:
    count = merge_summaries(args.inputs, args.out)
    print(f"merged {count} rows from {len(args.inputs)} files -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtrain",
                                     description="Hybrid parameter-generation training harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--mode", choices=("full", "qt", "qpa", "prune", "share"))
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--data", required=True, help="track CSV or synth:SEED:COUNT[:STEPS]")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="run a config grid")
    p.add_argument("--grid", required=True, help="JSON: {data, base, axes}")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("gradcheck", help="run the end-to-end gradient audit")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("report", help="merge summary CSVs")
    p.add_argument("inputs", nargs="+", help="summary.csv files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
