"""Command-line entry point: ``memcodec analyze|oracle|train|memory``.

Primary outputs are deterministic; wall-clock timestamps go only to the
``run.log`` sidecar in the output directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DomainError, GuardError, NumericError, ParseError
from .info import all_bit_vectors, bits_to_str, entropy, max_entropy, redundancy
from .loss import LossWeights
from .oracle import oracle_rows, rows_to_csv
from .store import MemoryStore, NeighborhoodSpec
from .datasets import table_from_name_or_path
from .trainer import TrainConfig, init_state, load_checkpoint, run_training, save_checkpoint

MAX_DENSITY_DIM = 12


def _write(out_dir, name: str, text: str) -> None:
    """Write ``text`` to ``out_dir/name``, or stdout when there is no output directory."""
    if out_dir is None:
        sys.stdout.write(text)
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(text, encoding="utf-8")


def _log(out_dir, message: str) -> None:
    if out_dir is None:
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    with open(path / "run.log", "a", encoding="utf-8") as fh:
        fh.write(f"{stamp} {message}\n")


def parse_weights(text: str) -> list[LossWeights]:
    """``"a:b,a:b"`` -> list of weights; an empty string gives an empty list."""
    return [LossWeights.parse(part) for part in text.split(",") if part.strip()]


def _kv(rows) -> str:
    return "".join(f"{k} = {v}\n" for k, v in rows)


# -- commands -------------------------------------------------------------
def cmd_analyze(args) -> None:
    table = table_from_name_or_path(args.table)
    marginals = table.dist.probs @ table.events
    rows = [
        ("events", len(table)),
        ("bits", table.dim),
        ("entropy", f"{entropy(table.dist):.4f}"),
        ("max_entropy", f"{max_entropy(len(table)):.4f}"),
        ("redundancy", f"{redundancy(table.dist):.4f}"),
    ]
    rows += [(f"marginal_bit{j + 1}", f"{p:.4f}") for j, p in enumerate(marginals)]
    _write(args.out, "analyze.txt", _kv(rows))


def cmd_oracle(args) -> None:
    table = table_from_name_or_path(args.table)
    weights = parse_weights(args.weights)
    rows = oracle_rows(table.events, table.dist, weights, args.memories, table.labels)
    _write(args.out, "oracle.csv", rows_to_csv(rows))


def _read_json(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno) from None
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: expected a JSON object", line=1)
    return raw


def resolve_train_config(args) -> tuple[dict, TrainConfig]:
    """Config file (or the checkpoint's own config when resuming) with command-line overrides."""
    if args.config:
        raw = _read_json(args.config)
    elif args.resume:
        raw = _read_json(Path(args.resume) / "config.json")
    else:
        raw = {}
    raw = dict(raw)
    table_name = args.table or raw.pop("table", "four_state")
    raw.pop("table", None)
    for key in ("seed", "epochs"):
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    config = TrainConfig.from_dict(raw)
    return {"table": table_name, **config.to_dict()}, config


def cmd_train(args) -> None:
    resolved, config = resolve_train_config(args)
    table = table_from_name_or_path(resolved["table"])
    if args.resume:
        state, _ = load_checkpoint(table, args.resume)
    else:
        state = init_state(table, config)
    start = time.perf_counter()
    _log(args.out, f"train start epochs_done={state.epochs_done} target={config.epochs}")

    def on_epoch(st, stats):
        if not math.isfinite(stats.mean_loss):
            raise NumericError(f"non-finite mean loss in epoch {stats.epoch}")
        _log(args.out, f"epoch {stats.epoch} mean_loss={stats.mean_loss:.4f} store={stats.store_size}")

    report = run_training(table, config, state, on_epoch)
    summary = report.summary()
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(state, config, out)
        (out / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (out / "epochs.csv").write_text(report.epochs_csv(), encoding="utf-8")
        (out / "summary.txt").write_text(summary, encoding="utf-8")
    sys.stdout.write(summary)
    _log(args.out, f"train done in {time.perf_counter() - start:.1f}s")


def _memory_stats(store: MemoryStore, top: int) -> str:
    values, counts = store.distinct()
    rows = [("records", store.total), ("distinct", len(counts)), ("d_mem", store.d_mem)]
    order = sorted(range(len(counts)), key=lambda i: (-counts[i], bits_to_str(values[i])))
    for rank, i in enumerate(order[:top], start=1):
        rows.append((f"top{rank}", f"{bits_to_str(values[i])} {counts[i] / store.total:.4f}"))
    return _kv(rows)


def _memory_density(store: MemoryStore, n: int) -> str:
    """Smoothed probability at every lattice point, with local maxima (Hamming-1) flagged."""
    if store.d_mem > MAX_DENSITY_DIM:
        raise GuardError(f"density over 2^{store.d_mem} points exceeds the guard of d_mem <= {MAX_DENSITY_DIM}")
    spec = NeighborhoodSpec(n)
    points = all_bit_vectors(store.d_mem)
    dens = np.array([store.smoothed_probability(p, spec) for p in points])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["memory", "smoothed_probability", "is_peak"])
    for i, p in enumerate(points):
        neighbours = [i ^ (1 << j) for j in range(store.d_mem)]
        peak = store.count(p) > 0 and all(dens[i] >= dens[k] for k in neighbours)
        writer.writerow([bits_to_str(p), f"{dens[i]:.4f}", int(peak)])
    return buf.getvalue()


def _memory_export(store: MemoryStore) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["seq", "memory"])
    for r in store.records():
        writer.writerow([r.seq, bits_to_str(r.vector)])
    return buf.getvalue()


def cmd_memory(args) -> None:
    store = MemoryStore.load(args.store)
    if args.action == "stats":
        _write(args.out, "memory_stats.txt", _memory_stats(store, args.top))
    elif args.action == "density":
        _write(args.out, "memory_density.csv", _memory_density(store, args.n))
    else:
        _write(args.out, "memory_export.csv", _memory_export(store))


# -- entry point ----------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memcodec", description="Memory/compression experiments in nats.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="entropy, maximum entropy and redundancy of an event table")
    p.add_argument("--table", required=True, help="built-in name (four_state, cards) or CSV path")
    p.add_argument("--out", help="output directory (default: stdout)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("oracle", help="exhaustive minimum of the weighted loss")
    p.add_argument("--table", required=True)
    p.add_argument("--weights", required=True, help="alpha:beta[,alpha:beta...]")
    p.add_argument("--memories", type=int, default=None, help="number of memory codes (default: one per event)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("train", help="train a codec on a streamed table")
    p.add_argument("--config", help="JSON file of training parameters (plus optional 'table')")
    p.add_argument("--table")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int, help="total epochs (overrides the config)")
    p.add_argument("--out")
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("memory", help="inspect a memory store file")
    p.add_argument("action", choices=["stats", "density", "export"])
    p.add_argument("--store", required=True)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--n", type=int, default=1, help="neighbourhood size for density")
    p.add_argument("--out")
    p.set_defaults(func=cmd_memory)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (DomainError, ParseError, GuardError, NumericError, OSError) as exc:
        message = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
