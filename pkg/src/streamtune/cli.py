"""Command-line entry point: ``streamtune {run,synth,tokenize,sample}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .data import load_jsonl, write_jsonl
from .embedder import load_file_embedder
from .harness import ConfigError, RunResult, aggregate, run_experiment
from .sampler import SampleRequest, random_sample, weighted_sampling
from .synthetic import synth_drift_stream
from .tokenizer import Vocabulary, tokenize
from .weighting import base_method, compute_weights, uses_class_adjustment

log = logging.getLogger("streamtune")

EXIT_OK, EXIT_RUN_FAILED, EXIT_CONFIG = 0, 1, 2

RESULTS_HEADER = [
    "run_id", "dataset", "method", "loss", "sample_size", "repetition", "seed",
    "macro_f1", "elapsed_seconds", "finetune_seconds", "final_train_loss",
]


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def run_id(grid_index: int, result: RunResult) -> str:
    c = result.config
    if c.sampling_method == "none":
        return f"{grid_index:03d}-none-r{result.repetition}"
    return f"{grid_index:03d}-{c.sampling_method}-{c.loss_kind}-{c.sample_size}-r{result.repetition}"


def format_results(cfg: ExperimentConfig, results, grid) -> tuple[str, dict]:
    """Results CSV text plus ``{run_id: trajectory CSV text}``."""
    echo = "".join(f"# {line}\n" for line in cfg.resolved_lines())
    buf = io.StringIO()
    buf.write(echo)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULTS_HEADER)
    trajectories = {}
    # run_experiment returns results in task order: grid order, then repetition
    grid_index = [k for k, c in enumerate(grid) for _ in range(c.repetitions)]
    for k, r in zip(grid_index, results):
        c = r.config
        rid = run_id(k, r)
        baseline = c.sampling_method == "none"
        timed = c.record_timing and r.error is None
        writer.writerow([
            rid, c.dataset_name, c.sampling_method,
            "none" if baseline else c.loss_kind,
            0 if baseline else c.sample_size,
            r.repetition, r.seed, _num(r.macro_f1),
            f"{r.elapsed_seconds:.3f}" if timed else "",
            f"{r.finetune_seconds:.3f}" if timed and not baseline else "",
            _num(r.train_report.final_loss) if r.train_report else "",
        ])
        tbuf = io.StringIO()
        tbuf.write(echo)
        tbuf.write("item_index,cumulative_macro_f1\n")
        for n_items, f1 in r.trajectory:
            tbuf.write(f"{n_items},{f1!r}\n")
        trajectories[rid] = tbuf.getvalue()
    return buf.getvalue(), trajectories


def format_summary(results, echo: str = "") -> str:
    buf = io.StringIO()
    buf.write(echo)
    rows = aggregate(results)
    keys = ["dataset", "method", "loss", "sample_size", "runs", "macro_f1_mean", "macro_f1_std",
            "elapsed_mean", "elapsed_std"]
    writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        grid = cfg.grid()
        dataset = load_jsonl(cfg.dataset)
        vocab = Vocabulary.load(cfg.vocabulary, cfg.unk_piece_count)
        embeddings = load_file_embedder(cfg.embeddings) if cfg.embeddings else None
        if embeddings is not None and any(c.sampling_method != "none" for c in grid):
            raise ConfigError("embeddings: precomputed vectors can only be used with sampling_method = none")
    except (ConfigError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    jobs = args.jobs or os.cpu_count() or 1
    results = run_experiment(grid, dataset, vocab, embeddings, jobs=jobs)
    text, trajectories = format_results(cfg, results, grid)

    out = cfg.output_dir
    traj_dir = out / "trajectories"
    traj_dir.mkdir(parents=True, exist_ok=True)
    for stale in traj_dir.glob("*.csv"):
        stale.unlink()
    (out / "results.csv").write_text(text, encoding="utf-8")
    echo = "".join(f"# {line}\n" for line in cfg.resolved_lines())
    (out / "summary.csv").write_text(format_summary(results, echo), encoding="utf-8")
    for rid, body in trajectories.items():
        (traj_dir / f"{rid}.csv").write_text(body, encoding="utf-8")

    failed = [r for r in results if r.error is not None]
    for r in failed:
        print(f"run failed ({r.config.sampling_method}/{r.config.loss_kind}, rep {r.repetition}): {r.error}",
              file=sys.stderr)
    return EXIT_RUN_FAILED if failed else EXIT_OK


def cmd_synth(args) -> int:
    try:
        items, vocab = synth_drift_stream(args.items, args.classes, args.drift_at, args.shift, args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "dataset.jsonl", items)
    vocab.save(out / "vocab.txt")
    return EXIT_OK


def cmd_tokenize(args) -> int:
    try:
        vocab = Vocabulary.load(args.vocab, args.unk_pieces)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    tok = tokenize(args.text, vocab)
    print(json.dumps({
        "tokens": list(tok.tokens),
        "pieces": list(tok.pieces),
        "pieces_per_token": list(tok.pieces_per_token),
        "token_count": tok.token_count,
        "wordpiece_count": tok.wordpiece_count,
        "ratio": tok.ratio,
    }, ensure_ascii=False))
    return EXIT_OK


def cmd_sample(args) -> int:
    try:
        kind = base_method(args.method)
        if kind == "none":
            raise ValueError("method 'none' does not sample")
        dataset = load_jsonl(args.dataset)
        vocab = Vocabulary.load(args.vocab, args.unk_pieces)
        request = SampleRequest(args.n, args.class_adjust or uses_class_adjustment(args.method), args.seed)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not dataset:
        print("error: empty buffer", file=sys.stderr)
        return EXIT_CONFIG

    labels = [item.label for item in dataset]
    try:
        if kind == "random":
            chosen = random_sample(len(dataset), request)
            p = 1.0 / len(dataset)
            rows = [(i, 1.0, 1.0, p) for i in chosen]
        else:
            weights = compute_weights(kind, [tokenize(item.text, vocab) for item in dataset])
            chosen, candidates = weighted_sampling(weights, labels, request)
            rows = [(i, candidates[i].base_weight, candidates[i].adjusted_weight, candidates[i].probability)
                    for i in chosen]
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["id", "class", "base_weight", "adjusted_weight", "probability"])
    for i, base, adjusted, prob in rows:
        item = dataset[int(i)]
        writer.writerow([item.id, item.label, repr(float(base)), repr(float(adjusted)), repr(float(prob))])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamtune", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=None, help="concurrent runs (default: CPU count)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="write a synthetic drift stream and its vocabulary")
    p.add_argument("--items", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--drift-at", type=int, required=True)
    p.add_argument("--shift", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("tokenize", help="show the wordpiece split of a text")
    p.add_argument("--vocab", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--unk-pieces", type=int, default=2)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("sample", help="sample items from a dataset treated as the buffer")
    p.add_argument("--dataset", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--method", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class-adjust", action="store_true")
    p.add_argument("--unk-pieces", type=int, default=2)
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
