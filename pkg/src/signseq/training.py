"""Loss, Adam, LR scheduling, stratified protocols, training loop, metrics.

The evaluation protocol is two-stage: a class-stratified 80/20 train/test
split, then stratified K-fold cross-validation (K = 4) inside the training
portion, each fold training an independent model. Reported metrics:
accuracy, micro/macro recall, macro/weighted F1, and the full confusion
matrix (rows = true class, columns = predicted).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, ShapeMismatch, Tensor
from .landmarks import ClassVocabulary, ClipTensor
from .model import ModelConfig, ModelParams, batch_from_clips, forward, init_params
from .rng import CounterRng


class LabelOutOfRange(ValueError):
    pass


class ClassTooSmall(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 50
    scheduler_factor: float = 0.5
    scheduler_patience: int = 2
    scheduler_threshold: float = 1e-4   # absolute val-loss improvement that resets patience
    scheduler_min_lr: float = 1e-6
    early_stop_patience: int = 5
    k_folds: int = 4
    test_fraction: float = 0.2
    t_data: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if self.batch_size < 1 or self.t_data < 1:
            raise ValueError("batch_size and t_data must be >= 1")


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over the batch (log-sum-exp form)."""
    B, C = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (B,):
        raise ShapeMismatch(f"{labels.shape} labels for batch of {B}")
    if labels.min() < 0 or labels.max() >= C:
        raise LabelOutOfRange(f"labels outside [0, {C})")
    onehot = np.zeros((B, C), dtype=logits.dtype)
    onehot[np.arange(B), labels] = 1.0
    picked = ad.mul(ad.log_softmax(logits), Tensor(onehot))
    return ad.scale(ad.sum_all(picked), -1.0 / B)


# ---------------------------------------------------------------------------
# Adam and the plateau scheduler
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        state = cls()
        for name, tensor in params.named():
            state.m[name] = np.zeros_like(tensor.data, dtype=np.float64)
            state.v[name] = np.zeros_like(tensor.data, dtype=np.float64)
        return state


def adam_update(value: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
                t: int, lr: float, b1: float, b2: float, eps: float):
    """Bias-corrected update for one parameter: (new value, new m, new v)."""
    m = b1 * m + (1 - b1) * grad
    v = b2 * v + (1 - b2) * grad * grad
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    return value - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState,
              config: TrainConfig, lr: Optional[float] = None) -> tuple[ModelParams, AdamState]:
    """One Adam update over all named params; returns fresh params, mutates state."""
    lr = config.learning_rate if lr is None else lr
    state.t += 1
    new_values: dict[str, np.ndarray] = {}
    for name, tensor in params.named():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != tensor.data.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} for {name} {tensor.data.shape}")
        new_values[name], state.m[name], state.v[name] = adam_update(
            tensor.data, g.astype(np.float64), state.m[name], state.v[name],
            state.t, lr, config.adam_beta1, config.adam_beta2, config.adam_eps)
    return params.replace_values(new_values), state


@dataclass
class SchedulerState:
    lr: float
    best: float = math.inf
    bad_count: int = 0


def scheduler_update(state: SchedulerState, validation_loss: float,
                     config: TrainConfig) -> float:
    """Reduce-on-plateau: halve lr after `patience` calls without improvement."""
    if not math.isfinite(validation_loss):
        raise ValueError("validation loss must be finite")
    if validation_loss < state.best - config.scheduler_threshold:
        state.best = validation_loss
        state.bad_count = 0
    else:
        state.bad_count += 1
        if state.bad_count >= config.scheduler_patience:
            # min_lr is a floor on reductions, never a reason to raise the lr
            new_lr = max(state.lr * config.scheduler_factor, config.scheduler_min_lr)
            state.lr = min(state.lr, new_lr)
            state.bad_count = 0
    return state.lr


# ---------------------------------------------------------------------------
# stratified protocols
# ---------------------------------------------------------------------------

def _by_class(labels: Sequence) -> dict:
    classes: dict = {}
    for i, lab in enumerate(labels):
        classes.setdefault(lab, []).append(i)
    return classes


def stratified_split(items: Sequence, labels: Sequence, test_fraction: float,
                     seed: int) -> tuple[list, list]:
    """Per-class proportional split; every class lands on both sides."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    if len(items) != len(labels):
        raise ShapeMismatch(f"{len(items)} items vs {len(labels)} labels")
    rng = CounterRng(seed, stream=2)
    test_idx: list[int] = []
    for pos, (lab, idx) in enumerate(sorted(_by_class(labels).items())):
        n_c = len(idx)
        if n_c < 2:
            raise ClassTooSmall(f"class {lab!r} has {n_c} sample(s), need >= 2")
        take = max(1, min(round(n_c * test_fraction), n_c - 1))
        shuffled = rng.spawn(pos).shuffle(idx)
        test_idx.extend(shuffled[:take])
    test_set = set(test_idx)
    train = [items[i] for i in range(len(items)) if i not in test_set]
    test = [items[i] for i in range(len(items)) if i in test_set]
    return train, test


def stratified_kfold(items: Sequence, labels: Sequence, k: int,
                     seed: int) -> list[tuple[list, list]]:
    """K class-stratified (train, validation) pairs; exact partition."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(items) != len(labels):
        raise ShapeMismatch(f"{len(items)} items vs {len(labels)} labels")
    rng = CounterRng(seed, stream=3)
    fold_of = np.empty(len(items), dtype=np.int64)
    for pos, (lab, idx) in enumerate(sorted(_by_class(labels).items())):
        if len(idx) < k:
            raise ClassTooSmall(f"class {lab!r} has {len(idx)} sample(s), need >= {k}")
        shuffled = rng.spawn(pos).shuffle(idx)
        for j, i in enumerate(shuffled):
            fold_of[i] = j % k
    folds = []
    for j in range(k):
        train = [items[i] for i in range(len(items)) if fold_of[i] != j]
        val = [items[i] for i in range(len(items)) if fold_of[i] == j]
        folds.append((train, val))
    return folds


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    accuracy: float
    recall_micro: float
    recall_macro: float
    f1_macro: float
    f1_weighted: float
    support: np.ndarray        # per-class true counts
    confusion: np.ndarray      # (C, C) int64, rows true / cols predicted


def metrics_from_confusion(confusion: np.ndarray) -> MetricsReport:
    conf = np.asarray(confusion, dtype=np.int64)
    total = int(conf.sum())
    if total == 0:
        raise EmptyDataset("confusion matrix is empty")
    support = conf.sum(axis=1)
    predicted = conf.sum(axis=0)
    diag = np.diag(conf)
    accuracy = float(diag.sum()) / total
    present = support > 0
    recall = np.zeros(conf.shape[0])
    recall[present] = diag[present] / support[present]
    precision = np.divide(diag, predicted, out=np.zeros(conf.shape[0], dtype=np.float64),
                          where=predicted > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom,
                   out=np.zeros(conf.shape[0], dtype=np.float64), where=denom > 0)
    return MetricsReport(
        accuracy=accuracy,
        recall_micro=accuracy,
        recall_macro=float(recall[present].mean()),
        f1_macro=float(f1[present].mean()),
        f1_weighted=float((f1[present] * support[present]).sum() / total),
        support=support,
        confusion=conf,
    )


def evaluate(params: ModelParams, config: ModelConfig, clips: list[ClipTensor],
             vocabulary: ClassVocabulary, batch_size: int = 64) -> MetricsReport:
    """Eval-mode predictions (argmax, ties to the lower index) over a dataset."""
    if not clips:
        raise EmptyDataset("nothing to evaluate")
    C = len(vocabulary)
    conf = np.zeros((C, C), dtype=np.int64)
    for lo in range(0, len(clips), batch_size):
        batch = clips[lo:lo + batch_size]
        feats, attend, labels = batch_from_clips(batch, dtype=params.embed_w.dtype)
        if labels.min() < 0 or labels.max() >= C:
            raise LabelOutOfRange("evaluation clip without a valid label")
        logits = forward(feats, attend, params, config, training=False)
        preds = np.argmax(logits.data, axis=1)
        for true, pred in zip(labels, preds):
            conf[true, pred] += 1
    return metrics_from_confusion(conf)


def confusion_csv(report: MetricsReport, vocabulary: ClassVocabulary) -> str:
    """C+1 CSV rows: class-name header, then integer counts per true class."""
    lines = [",".join(vocabulary.names)]
    for row in report.confusion:
        lines.append(",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def _epoch_eval(params, model_config, clips, batch_size):
    """(mean loss, accuracy) in eval mode."""
    total_loss, correct = 0.0, 0
    for lo in range(0, len(clips), batch_size):
        batch = clips[lo:lo + batch_size]
        feats, attend, labels = batch_from_clips(batch, dtype=params.embed_w.dtype)
        logits = forward(feats, attend, params, model_config, training=False)
        lse = logits.data - logits.data.max(axis=1, keepdims=True)
        logp = lse - np.log(np.exp(lse).sum(axis=1, keepdims=True))
        total_loss += -logp[np.arange(len(batch)), labels].sum()
        correct += int((np.argmax(logits.data, axis=1) == labels).sum())
    return total_loss / len(clips), correct / len(clips)


def train_loop(train_clips: list[ClipTensor], val_clips: list[ClipTensor],
               model_config: ModelConfig, train_config: TrainConfig,
               initial_params: Optional[ModelParams] = None):
    """Seeded minibatch training; returns (best-val-loss params, epoch log).

    Each epoch: shuffle, forward/backward/Adam per batch, eval-mode pass on
    the validation set, plateau scheduler step. Stops at max_epochs or after
    early_stop_patience epochs without validation-loss improvement.
    """
    if not train_clips:
        raise EmptyDataset("empty training set")
    if not val_clips:
        raise EmptyDataset("empty validation set")
    seed = train_config.seed
    params = initial_params if initial_params is not None else init_params(model_config, seed)
    adam = AdamState.for_params(params)
    sched = SchedulerState(lr=train_config.learning_rate)
    shuffle_rng = CounterRng(seed, stream=4)
    dropout_rng = CounterRng(seed, stream=5)
    best_val = math.inf
    best_params = params
    bad_epochs = 0
    log: list[dict] = []
    order = list(range(len(train_clips)))
    for epoch in range(train_config.max_epochs):
        lr = sched.lr
        order = shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        for lo in range(0, len(order), train_config.batch_size):
            batch = [train_clips[i] for i in order[lo:lo + train_config.batch_size]]
            feats, attend, labels = batch_from_clips(batch, dtype=params.embed_w.dtype)
            with Graph() as graph:
                logits = forward(feats, attend, params, model_config,
                                 training=True, rng=dropout_rng)
                loss = cross_entropy(logits, labels)
            grad_map = ad.backward(loss, graph)
            grads = {name: grad_map[t] for name, t in params.named() if t in grad_map}
            params, adam = adam_step(params, grads, adam, train_config, lr=lr)
            epoch_loss += loss.item() * len(batch)
        train_loss = epoch_loss / len(train_clips)
        val_loss, val_acc = _epoch_eval(params, model_config, val_clips,
                                        train_config.batch_size)
        log.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                    "val_accuracy": val_acc, "lr": lr})
        improved = val_loss < best_val - train_config.scheduler_threshold
        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
        bad_epochs = 0 if improved else bad_epochs + 1
        scheduler_update(sched, val_loss, train_config)
        if bad_epochs >= train_config.early_stop_patience:
            break
    return best_params, log
