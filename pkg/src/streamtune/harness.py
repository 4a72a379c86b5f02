"""Prequential (test-then-train) text stream runs with a single fine-tuning
trigger, and repeated runs over a configuration grid."""

from __future__ import annotations

import logging
import math
import time
import traceback
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .classifier import IncrementalSVM
from .data import StreamItem, timestamp_key
from .embedder import EmbedderState, embed, featurize_many
from .finetune import LOSS_KINDS, Schedule, TrainReport, finetune
from .sampler import SampleRequest, random_sample, weighted_sampling
from .tokenizer import Vocabulary, tokenize
from .weighting import METHODS, compute_weights, uses_class_adjustment

log = logging.getLogger(__name__)

NO_PREDICTION = -1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    dataset_name: str = "dataset"
    stream_length: int = 200_000
    buffer_size: int = 50_000
    trigger_point: Optional[int] = None  # defaults to buffer_size
    sample_size: int = 500
    sampling_method: str = "random"
    loss_kind: str = "BATL"
    repetitions: int = 5
    master_seed: int = 0
    hash_dim: int = 512
    out_dim: int = 64
    svm_lambda: float = 1e-4
    epochs: int = 10
    batch_size: int = 32
    warmup_steps: int = 100
    peak_lr: float = 1.0
    margin: float = 0.5
    ctl_negative_ratio: int = 4
    checkpoint_every: int = 1000
    record_timing: bool = True

    @property
    def trigger(self) -> int:
        return self.buffer_size if self.trigger_point is None else self.trigger_point

    @property
    def schedule(self) -> Schedule:
        return Schedule(
            self.epochs, self.batch_size, self.warmup_steps, self.peak_lr, self.margin, self.ctl_negative_ratio
        )

    def validate(self) -> "RunConfig":
        problems = []
        if self.sampling_method not in METHODS:
            problems.append(f"sampling_method: unknown method {self.sampling_method!r}")
        if self.loss_kind not in LOSS_KINDS:
            problems.append(f"loss_kind: unknown loss {self.loss_kind!r}")
        for name in ("stream_length", "buffer_size", "sample_size", "repetitions", "hash_dim", "out_dim",
                     "epochs", "batch_size", "ctl_negative_ratio", "checkpoint_every"):
            if getattr(self, name) < 1:
                problems.append(f"{name}: must be a positive integer")
        if self.hash_dim < 2:
            problems.append("hash_dim: must be >= 2")
        if self.trigger < 0:
            problems.append("trigger_point: must be non-negative")
        if self.warmup_steps < 0:
            problems.append("warmup_steps: must be non-negative")
        for name in ("svm_lambda", "peak_lr", "margin"):
            if not getattr(self, name) > 0:
                problems.append(f"{name}: must be positive")
        if self.trigger > self.stream_length:
            problems.append(f"trigger_point ({self.trigger}) > stream_length ({self.stream_length})")
        if self.sampling_method != "none":
            available = min(self.buffer_size, self.trigger)
            if self.sample_size > self.buffer_size:
                problems.append(f"sample_size ({self.sample_size}) > buffer_size ({self.buffer_size})")
            elif self.sample_size > available:
                problems.append(f"sample_size ({self.sample_size}) > trigger_point ({self.trigger})")
        if not 0 <= self.master_seed < 2**64:
            problems.append("master_seed: must be a 64-bit unsigned integer")
        if problems:
            raise ConfigError("; ".join(problems))
        return self


@dataclass
class MetricsAccumulator:
    """Per-class confusion counts; ``counts[c] = [tp, fp, fn]``."""

    counts: dict = field(default_factory=dict)
    item_count: int = 0

    def update(self, gold: int, predicted: int) -> None:
        self.item_count += 1
        if predicted == gold:
            self.counts.setdefault(gold, [0, 0, 0])[0] += 1
            return
        self.counts.setdefault(gold, [0, 0, 0])[2] += 1
        if predicted != NO_PREDICTION:
            self.counts.setdefault(predicted, [0, 0, 0])[1] += 1


def macro_f1(acc: MetricsAccumulator) -> float:
    """Unweighted mean of per-class F1 over classes present in the gold
    labels; 0/0 ratios count as 0."""
    if acc.item_count == 0:
        raise ValueError("empty accumulator")
    scores = []
    # fixed class order keeps the float sum reproducible
    for c in sorted(acc.counts):
        tp, fp, fn = acc.counts[c]
        if tp + fn == 0:
            continue
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn)
        scores.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return sum(scores) / len(scores)


@dataclass
class RunResult:
    config: RunConfig
    repetition: int
    seed: int
    macro_f1: float = math.nan
    trajectory: list = field(default_factory=list)  # (items seen, cumulative macro-F1)
    elapsed_seconds: float = 0.0
    finetune_seconds: float = 0.0
    train_report: Optional[TrainReport] = None
    events: list = field(default_factory=list)  # (item index, embedder version)
    gold: list = field(default_factory=list)
    predicted: list = field(default_factory=list)
    error: Optional[str] = None

    def outcome(self) -> dict:
        """Everything except wall-clock measurements and the config echo."""
        out = asdict(self)
        for key in ("config", "elapsed_seconds", "finetune_seconds"):
            out.pop(key)
        if self.train_report is not None:
            out["train_report"].pop("wall_time")
        return out


def derive_seed(master_seed: int, repetition: int) -> int:
    ss = np.random.SeedSequence([master_seed, repetition])
    return int(ss.generate_state(1, np.uint64)[0])


def stratified_stream(dataset: Sequence[StreamItem], length: int, seed) -> list[StreamItem]:
    """Class-proportional subset (largest-remainder quotas) in timestamp order."""
    n = len(dataset)
    if length > n:
        raise ValueError(f"stream length {length} exceeds dataset size {n}")
    if length < 0:
        raise ValueError("stream length must be non-negative")
    by_class: dict = {}
    for i, item in enumerate(dataset):
        by_class.setdefault(item.label, []).append(i)
    labels = sorted(by_class)
    exact = [length * len(by_class[c]) / n for c in labels]
    quota = [math.floor(q) for q in exact]
    leftover = length - sum(quota)
    by_remainder = sorted(range(len(labels)), key=lambda k: (-(exact[k] - quota[k]), labels[k]))
    for k in by_remainder[:leftover]:
        quota[k] += 1

    rng = np.random.default_rng(seed)
    chosen = []
    for c, q in zip(labels, quota):
        members = by_class[c]
        picks = rng.choice(len(members), size=q, replace=False) if q < len(members) else range(len(members))
        chosen.extend(members[j] for j in picks)
    chosen.sort(key=lambda i: (timestamp_key(dataset[i].timestamp), i))
    return [dataset[i] for i in chosen]


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint64)[0])


def _trigger(config, buffer, state, ordinal, n_classes, sample_seed, train_seed):
    entries = list(buffer)
    tokenized = [tok for _, tok, _ in entries]
    labels = [label for _, _, label in entries]
    request = SampleRequest(config.sample_size, uses_class_adjustment(config.sampling_method), sample_seed)
    if config.sampling_method == "random":
        chosen = random_sample(len(entries), request)
    else:
        weights = compute_weights(config.sampling_method, tokenized)
        chosen, _ = weighted_sampling(weights, labels, request)
    features = featurize_many([tokenized[i].pieces for i in chosen], state.hash_dim)
    classes = [ordinal[labels[i]] for i in chosen]
    return finetune(state, features, classes, config.loss_kind, config.schedule, train_seed, n_classes)


def run_scenario(
    config: RunConfig,
    dataset: Sequence[StreamItem],
    vocab: Vocabulary,
    repetition: int = 0,
    seed: Optional[int] = None,
    embeddings: Optional[Mapping[str, np.ndarray]] = None,
    classifier=None,
) -> RunResult:
    """One prequential pass: embed, predict, score, learn; the first
    ``trigger`` items also enter the buffer, and at the trigger the buffer
    is sampled and the embedder fine-tuned. The classifier is never reset.

    ``embeddings`` replaces the hashing embedder with fixed vectors (baseline
    runs only). ``classifier`` overrides the default :class:`IncrementalSVM`.
    """
    config.validate()
    if embeddings is not None and config.sampling_method != "none":
        raise ConfigError("precomputed embeddings cannot be fine-tuned; use sampling_method = none")
    if seed is None:
        seed = derive_seed(config.master_seed, repetition)
    stream_ss, init_ss, sample_ss, train_ss = np.random.SeedSequence(seed).spawn(4)

    stream = stratified_stream(dataset, config.stream_length, stream_ss)
    distinct = sorted({item.label for item in dataset})
    ordinal = {c: k for k, c in enumerate(distinct)}
    state = EmbedderState.initial(config.hash_dim, config.out_dim, init_ss)
    if classifier is None:
        dim = config.out_dim if embeddings is None else len(next(iter(embeddings.values())))
        classifier = IncrementalSVM(dim, config.svm_lambda)

    result = RunResult(config, repetition, seed)
    acc = MetricsAccumulator()
    buffer = deque(maxlen=config.buffer_size)
    t = config.trigger
    fine_tune = config.sampling_method != "none"
    every = config.checkpoint_every
    finetune_seconds = 0.0

    def fire(index):
        nonlocal state, finetune_seconds
        if not fine_tune:
            return
        began = time.perf_counter()
        state, report = _trigger(
            config, buffer, state, ordinal, len(distinct), _seed_int(sample_ss), _seed_int(train_ss)
        )
        finetune_seconds = time.perf_counter() - began
        result.train_report = report
        result.events.append((index, state.version))
        buffer.clear()

    started = time.perf_counter()
    for i, item in enumerate(stream):
        if i == t:
            fire(i)
        tok = tokenize(item.text, vocab)
        x = embeddings[item.id] if embeddings is not None else embed(state, tok.pieces)
        predicted = classifier.predict(x) if classifier.classes else NO_PREDICTION
        acc.update(item.label, predicted)
        result.gold.append(item.label)
        result.predicted.append(predicted)
        classifier.learn(x, item.label)
        if i < t:
            buffer.append((i, tok, item.label))
        if (i + 1) % every == 0:
            result.trajectory.append((i + 1, macro_f1(acc)))
    if t == len(stream):
        fire(t)
    elapsed = time.perf_counter() - started

    if stream and (not result.trajectory or result.trajectory[-1][0] != len(stream)):
        result.trajectory.append((len(stream), macro_f1(acc)))
    result.macro_f1 = macro_f1(acc) if stream else math.nan
    if config.record_timing:
        result.elapsed_seconds = elapsed
        result.finetune_seconds = finetune_seconds
    return result


# -- repeated runs -----------------------------------------------------------

_worker_state: dict = {}


def _init_worker(dataset, vocab, embeddings):
    _worker_state.update(dataset=dataset, vocab=vocab, embeddings=embeddings)


def _run_task(task):
    config, repetition = task
    seed = derive_seed(config.master_seed, repetition)
    try:
        return run_scenario(
            config, _worker_state["dataset"], _worker_state["vocab"], repetition, seed, _worker_state["embeddings"]
        )
    except Exception as exc:  # recorded per run; the grid keeps going
        log.error("run %s rep %d failed: %s", config.sampling_method, repetition, exc)
        log.debug("%s", traceback.format_exc())
        return RunResult(config, repetition, seed, error=f"{type(exc).__name__}: {exc}")


def run_experiment(
    grid: Sequence[RunConfig],
    dataset: Sequence[StreamItem],
    vocab: Vocabulary,
    embeddings=None,
    jobs: int = 1,
) -> list[RunResult]:
    """Every config ``repetitions`` times, seeds derived from
    ``(master_seed, repetition)``; output follows grid order."""
    if not grid:
        raise ValueError("empty configuration grid")
    tasks = [(config, rep) for config in grid for rep in range(config.repetitions)]
    if jobs <= 1 or len(tasks) == 1:
        _init_worker(dataset, vocab, embeddings)
        return [_run_task(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(dataset, vocab, embeddings)) as pool:
        return list(pool.map(_run_task, tasks))


def expand_grid(base: RunConfig, methods, losses, sample_sizes) -> list[RunConfig]:
    """Cartesian product; a ``none`` method appears once whatever the loss
    and sample size lists contain."""
    grid = []
    for method in methods:
        if method == "none":
            grid.append(replace(base, sampling_method="none", loss_kind=losses[0], sample_size=sample_sizes[0]))
            continue
        for loss in losses:
            for n_s in sample_sizes:
                grid.append(replace(base, sampling_method=method, loss_kind=loss, sample_size=n_s))
    return grid


def aggregate(results: Sequence[RunResult]) -> list[dict]:
    """Mean and sample standard deviation per (dataset, method, loss, n_s),
    failed runs excluded."""
    groups: dict = {}
    for r in results:
        if r.error is not None:
            continue
        c = r.config
        if c.sampling_method == "none":
            key = (c.dataset_name, "none", "none", 0)
        else:
            key = (c.dataset_name, c.sampling_method, c.loss_kind, c.sample_size)
        groups.setdefault(key, []).append(r)
    rows = []
    for (name, method, loss, n_s), runs in groups.items():
        f1 = np.array([r.macro_f1 for r in runs])
        secs = np.array([r.elapsed_seconds for r in runs])
        ddof = 1 if len(runs) > 1 else 0
        rows.append({
            "dataset": name, "method": method, "loss": loss, "sample_size": n_s, "runs": len(runs),
            "macro_f1_mean": float(f1.mean()), "macro_f1_std": float(f1.std(ddof=ddof)),
            "elapsed_mean": float(secs.mean()), "elapsed_std": float(secs.std(ddof=ddof)),
        })
    return rows


CONFIG_FIELDS = {f.name: f for f in fields(RunConfig)}
