"""Fine-tuning of the embedder projection from sampled texts.

Four objectives are supported:

* ``BATL`` - batch-all triplet loss over single texts and their classes,
* ``CTL``  - contrastive tension: a text paired with itself is positive,
  randomly drawn other texts are negatives,
* ``OCL``  - contrastive loss per pair weighted by a continuous class
  similarity ``1 - |c1 - c2| / n_classes``,
* ``SL``   - softmax classification of ``(u, v, |u - v|)`` into the
  absolute class distance ``|c1 - c2|``.

All gradients are analytic. Inputs are dense featurized rows (see
:func:`streamtune.embedder.featurize_many`); embeddings are ``P x``
normalized to unit length, except for CTL which scores raw dot products.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .embedder import NORM_FLOOR, EmbedderState

LOSS_KINDS = ("BATL", "CTL", "OCL", "SL")


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainingPair:
    left: int  # index into the sample list
    right: int
    label: float


@dataclass(frozen=True)
class Schedule:
    epochs: int = 10
    batch_size: int = 32
    warmup_steps: int = 100
    peak_lr: float = 1.0
    margin: float = 0.5
    ctl_negative_ratio: int = 4

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.warmup_steps < 0:
            raise ValueError("epochs and batch_size must be positive, warmup_steps non-negative")
        if self.peak_lr <= 0 or self.margin <= 0 or self.ctl_negative_ratio < 1:
            raise ValueError("peak_lr, margin and ctl_negative_ratio must be positive")

    def total_steps(self, n_units: int) -> int:
        return self.epochs * math.ceil(n_units / self.batch_size)

    def lr(self, step: int, total_steps: int) -> float:
        """Learning rate for 1-based ``step``: linear warmup to ``peak_lr``
        at ``warmup_steps``, then linear decay reaching 0 at ``total_steps``."""
        if step <= self.warmup_steps:
            return self.peak_lr * step / self.warmup_steps
        span = total_steps - self.warmup_steps
        return self.peak_lr * max(0.0, (total_steps - step) / span)


@dataclass(frozen=True)
class TrainReport:
    loss_kind: str
    initial_loss: float
    final_loss: float
    steps: int
    wall_time: float


# -- pair construction -------------------------------------------------------


def _check_samples(classes: Sequence[int], n_classes: int) -> None:
    if len(classes) < 2:
        raise ValueError("at least 2 samples are required to form pairs")
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    for c in classes:
        if not 0 <= c < n_classes:
            raise ValueError(f"class {c} is not an ordinal in [0, {n_classes})")


def _matching(n: int, seed) -> np.ndarray:
    perm = np.random.default_rng(seed).permutation(n)
    return perm[: 2 * (n // 2)].reshape(-1, 2)


def build_ocl_pairs(classes: Sequence[int], n_classes: int, seed=0) -> list[TrainingPair]:
    _check_samples(classes, n_classes)
    return [
        TrainingPair(int(a), int(b), 1.0 - abs(classes[a] - classes[b]) / n_classes)
        for a, b in _matching(len(classes), seed)
    ]


def build_sl_pairs(classes: Sequence[int], n_classes: int, seed=0) -> list[TrainingPair]:
    _check_samples(classes, n_classes)
    return [TrainingPair(int(a), int(b), abs(classes[a] - classes[b])) for a, b in _matching(len(classes), seed)]


def build_ctl_pairs(n_samples: int, ratio: int = 4, seed=0) -> list[TrainingPair]:
    if n_samples < 2:
        raise ValueError("CTL needs at least 2 samples to draw negatives")
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n_samples):
        pairs.append(TrainingPair(i, i, 1))
        for j in rng.integers(0, n_samples - 1, size=ratio):
            j = int(j) + (j >= i)
            pairs.append(TrainingPair(i, j, 0))
    return pairs


# -- shared forward/backward through projection + normalization -------------


def _normalized(X: np.ndarray, P: np.ndarray):
    U = X @ P.T
    r = np.linalg.norm(U, axis=1, keepdims=True)
    live = r >= NORM_FLOOR
    E = np.where(live, U / np.where(live, r, 1.0), 0.0)
    return E, r, live


def _back_normalized(G_E: np.ndarray, E: np.ndarray, r: np.ndarray, live: np.ndarray, X: np.ndarray) -> np.ndarray:
    # d(u/|u|)/du = (I - e e^T) / |u|
    G_U = (G_E - E * np.sum(G_E * E, axis=1, keepdims=True)) / np.where(live, r, 1.0)
    G_U = np.where(live, G_U, 0.0)
    return G_U.T @ X


# -- losses ------------------------------------------------------------------


def batl_loss_and_grad(X: np.ndarray, classes, P: np.ndarray, margin: float = 0.5):
    classes = np.asarray(classes)
    E, r, live = _normalized(X, P)
    diff = E[:, None, :] - E[None, :, :]
    D = np.sqrt(np.sum(diff * diff, axis=2))

    same = classes[:, None] == classes[None, :]
    pos = same & ~np.eye(len(classes), dtype=bool)
    valid = pos[:, :, None] & ~same[:, None, :]
    n_valid = int(valid.sum())
    if n_valid == 0:
        return 0.0, np.zeros_like(P)

    hinge = D[:, :, None] - D[:, None, :] + margin
    active = valid & (hinge > 0)
    loss = float(np.sum(hinge, where=active)) / n_valid

    G_D = (active.sum(axis=2) - active.sum(axis=1)) / n_valid
    S = G_D + G_D.T
    S = np.divide(S, D, out=np.zeros_like(S), where=D >= NORM_FLOOR)
    G_E = S.sum(axis=1)[:, None] * E - S @ E
    return loss, _back_normalized(G_E, E, r, live, X)


def ctl_loss_and_grad(X_left: np.ndarray, X_right: np.ndarray, labels, P: np.ndarray):
    y = np.asarray(labels, dtype=np.float64)
    U = X_left @ P.T
    V = X_right @ P.T
    s = np.sum(U * V, axis=1)
    n = len(y)
    # -[y log sig(s) + (1-y) log sig(-s)] == softplus(s) - y s
    loss = float(np.mean(np.logaddexp(0.0, s) - y * s))
    g = (0.5 * (1.0 + np.tanh(0.5 * s)) - y) / n
    grad = (g[:, None] * V).T @ X_left + (g[:, None] * U).T @ X_right
    return loss, grad


def ocl_loss_and_grad(X_left: np.ndarray, X_right: np.ndarray, labels, P: np.ndarray, margin: float = 0.5):
    lab = np.asarray(labels, dtype=np.float64)
    E1, r1, live1 = _normalized(X_left, P)
    E2, r2, live2 = _normalized(X_right, P)
    diff = E1 - E2
    d = np.linalg.norm(diff, axis=1)
    gap = np.maximum(0.0, margin - d)
    n = len(lab)
    loss = float(np.mean(lab * d * d + (1.0 - lab) * gap * gap))

    push = np.divide(gap, d, out=np.zeros_like(d), where=d >= NORM_FLOOR)
    G_diff = (2.0 * lab - 2.0 * (1.0 - lab) * push)[:, None] * diff / n
    grad = _back_normalized(G_diff, E1, r1, live1, X_left) - _back_normalized(G_diff, E2, r2, live2, X_right)
    return loss, grad


def sl_loss_and_grad(X_left: np.ndarray, X_right: np.ndarray, labels, P: np.ndarray, head: np.ndarray):
    """Returns ``(loss, grad_projection, grad_head)``; ``head`` has shape
    ``(n_labels, 3 * out_dim)``."""
    lab = np.asarray(labels, dtype=np.intp)
    n_labels = head.shape[0]
    if np.any(lab < 0) or np.any(lab >= n_labels):
        raise ValueError(f"label out of range [0, {n_labels})")
    E1, r1, live1 = _normalized(X_left, P)
    E2, r2, live2 = _normalized(X_right, P)
    diff = E1 - E2
    phi = np.concatenate([E1, E2, np.abs(diff)], axis=1)
    logits = phi @ head.T
    logits -= logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(logits), axis=1))
    rows = np.arange(len(lab))
    loss = float(np.mean(log_norm - logits[rows, lab]))

    G_logits = np.exp(logits - log_norm[:, None])
    G_logits[rows, lab] -= 1.0
    G_logits /= len(lab)
    G_head = G_logits.T @ phi
    G_phi = G_logits @ head
    d = E1.shape[1]
    G_abs = G_phi[:, 2 * d :] * np.sign(diff)
    G_E1 = G_phi[:, :d] + G_abs
    G_E2 = G_phi[:, d : 2 * d] - G_abs
    grad = _back_normalized(G_E1, E1, r1, live1, X_left) + _back_normalized(G_E2, E2, r2, live2, X_right)
    return loss, grad, G_head


# -- training loop -----------------------------------------------------------


class _Objective:
    """Binds a loss kind to its training units (items or pairs)."""

    def __init__(self, kind, X, classes, n_classes, schedule, seed):
        self.kind = kind
        self.X = X
        self.classes = np.asarray(classes)
        self.margin = schedule.margin
        self.head = None
        if kind == "BATL":
            self.n_units = len(X)
            return
        if kind == "CTL":
            pairs = build_ctl_pairs(len(X), schedule.ctl_negative_ratio, seed)
        elif kind == "OCL":
            pairs = build_ocl_pairs(self.classes, n_classes, seed)
        else:
            pairs = build_sl_pairs(self.classes, n_classes, seed)
        self.left = np.array([p.left for p in pairs], dtype=np.intp)
        self.right = np.array([p.right for p in pairs], dtype=np.intp)
        self.labels = np.array([p.label for p in pairs], dtype=np.float64)
        self.n_units = len(pairs)

    def init_head(self, n_classes, out_dim, seed):
        rng = np.random.default_rng(seed)
        self.head = rng.standard_normal((n_classes, 3 * out_dim)) / math.sqrt(3 * out_dim)

    def loss_and_grads(self, units: np.ndarray, P: np.ndarray, head: Optional[np.ndarray]):
        if self.kind == "BATL":
            loss, g = batl_loss_and_grad(self.X[units], self.classes[units], P, self.margin)
            return loss, g, None
        XL, XR, lab = self.X[self.left[units]], self.X[self.right[units]], self.labels[units]
        if self.kind == "CTL":
            loss, g = ctl_loss_and_grad(XL, XR, lab, P)
            return loss, g, None
        if self.kind == "OCL":
            loss, g = ocl_loss_and_grad(XL, XR, lab, P, self.margin)
            return loss, g, None
        return sl_loss_and_grad(XL, XR, lab, P, head)

    def dataset_loss(self, P, head, batch_size) -> float:
        """Mean batch loss over the units in build order."""
        order = np.arange(self.n_units)
        losses = [
            self.loss_and_grads(order[i : i + batch_size], P, head)[0] for i in range(0, self.n_units, batch_size)
        ]
        return float(np.mean(losses))


def finetune(
    state: EmbedderState,
    features: np.ndarray,
    classes: Sequence[int],
    loss_kind: str,
    schedule: Schedule = Schedule(),
    seed=0,
    n_classes: Optional[int] = None,
) -> tuple[EmbedderState, TrainReport]:
    """Run the SGD schedule and return a new state (version + 1).

    ``classes`` must be ordinals ``0..n_classes-1`` for OCL and SL.
    ``state`` itself is never modified.
    """
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    X = np.asarray(features, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("no samples to fine-tune on")
    if len(X) != len(classes):
        raise ValueError("features and classes are not aligned")
    if n_classes is None:
        n_classes = int(max(classes)) + 1

    started = time.perf_counter()
    build_seed, shuffle_seed, head_seed = np.random.SeedSequence(seed).spawn(3)
    obj = _Objective(loss_kind, X, classes, n_classes, schedule, build_seed)
    head = None
    if loss_kind == "SL":
        obj.init_head(n_classes, state.out_dim, head_seed)
        head = obj.head.copy()

    P = state.projection.copy()
    # non-finite values are detected explicitly and raised as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        initial = obj.dataset_loss(P, head, schedule.batch_size)
        total = schedule.total_steps(obj.n_units)
        rng = np.random.default_rng(shuffle_seed)
        step = 0
        for _ in range(schedule.epochs):
            order = rng.permutation(obj.n_units)
            for i in range(0, obj.n_units, schedule.batch_size):
                step += 1
                loss, g, g_head = obj.loss_and_grads(order[i : i + schedule.batch_size], P, head)
                if not math.isfinite(loss):
                    raise DivergenceError(f"divergence: non-finite {loss_kind} loss at step {step}")
                lr = schedule.lr(step, total)
                P -= lr * g
                if g_head is not None:
                    head -= lr * g_head
        if not np.all(np.isfinite(P)):
            raise DivergenceError(f"divergence: non-finite projection after {loss_kind} fine-tuning")
        final = obj.dataset_loss(P, head, schedule.batch_size)
        if not math.isfinite(final):
            raise DivergenceError(f"divergence: non-finite final {loss_kind} loss")

    report = TrainReport(loss_kind, initial, final, step, time.perf_counter() - started)
    return state.updated(P), report
