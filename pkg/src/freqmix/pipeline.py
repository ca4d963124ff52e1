"""Training schedule and loop, evaluation, score fusion, gradient checks, reports."""
from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .data import Dataset
from .model import FreqMixFormer

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainingSchedule:
    epochs: int = 100
    batch_size: int = 128
    base_lr: float = 0.1
    warmup_epochs: int = 5
    decay_milestones: tuple = (35, 55, 75)
    decay_factor: float = 0.1
    weight_decay: float = 0.0005
    momentum: float = 0.9
    clip_norm: float | None = 1.0  # global gradient-norm cap; None disables
    seed: int = 0

    def __post_init__(self):
        ms = tuple(self.decay_milestones)
        object.__setattr__(self, "decay_milestones", ms)
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not self.base_lr > 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError(f"milestones {ms} must be strictly increasing")
        if ms and ms[-1] >= self.epochs:
            raise ValueError(f"milestone {ms[-1]} not below epochs={self.epochs}")
        if ms and self.warmup_epochs >= ms[0]:
            raise ValueError(f"warmup ({self.warmup_epochs}) must end before the first milestone ({ms[0]})")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError(f"clip_norm must be positive or None, got {self.clip_norm}")


def lr_at(schedule: TrainingSchedule, epoch: int) -> float:
    """Linear warmup to base_lr, then x decay_factor at every passed milestone (0-based epochs)."""
    if not 0 <= epoch < schedule.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {schedule.epochs})")
    if epoch < schedule.warmup_epochs:
        lr = schedule.base_lr * (epoch + 1) / schedule.warmup_epochs
    else:
        passed = sum(epoch >= m for m in schedule.decay_milestones)
        lr = schedule.base_lr * schedule.decay_factor ** passed
    # strip binary representation noise (0.1 * 0.1 -> 0.01)
    return float(f"{lr:.15g}")


# ---------------------------------------------------------------------------
# metrics and score files

@dataclass
class Metrics:
    top1: float
    per_class: np.ndarray
    confusion: np.ndarray
    loss_curve: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())


def metrics_from_scores(scores, labels, num_classes: int) -> Metrics:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(scores) == 0:
        raise ValueError("no samples to score")
    pred = scores.argmax(axis=1)
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (labels, pred), 1)
    support = conf.sum(axis=1)
    per_class = np.divide(np.diag(conf), support, out=np.zeros(num_classes), where=support > 0)
    return Metrics(np.trace(conf) / conf.sum(), per_class, conf)


@dataclass
class ScoreFile:
    ids: list
    scores: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2 or len(self.ids) != len(self.scores):
            raise ValueError("one score row per sample id required")

    @property
    def num_classes(self) -> int:
        return self.scores.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id"] + [f"c{i}" for i in range(self.num_classes)])
        for i, row in zip(self.ids, self.scores):
            w.writerow([i] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def read(cls, path) -> "ScoreFile":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[0] != "id" or header[1:] != [f"c{i}" for i in range(len(header) - 1)]:
            raise ValueError(f"{path}: bad score header {header}")
        return cls([r[0] for r in body], np.array([[float(v) for v in r[1:]] for r in body]).reshape(len(body), -1))


def _softmax_rows(s):
    z = s - s.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def fuse_scores(score_files, weights=None) -> np.ndarray:
    if not score_files:
        raise ValueError("nothing to fuse")
    weights = [1.0] * len(score_files) if weights is None else list(weights)
    if len(weights) != len(score_files):
        raise ValueError(f"{len(weights)} weights for {len(score_files)} score files")
    ref = score_files[0]
    for sf in score_files[1:]:
        if list(sf.ids) != list(ref.ids) or sf.num_classes != ref.num_classes:
            raise ValueError("score files are misaligned (sample ids or class counts differ)")
    return sum(w * _softmax_rows(sf.scores) for w, sf in zip(weights, score_files))


def ensemble(score_files, weights, labels) -> Metrics:
    """Weighted sum of per-stream softmax scores, then argmax."""
    fused = fuse_scores(score_files, weights)
    return metrics_from_scores(fused, labels, score_files[0].num_classes)


def evaluate(model: FreqMixFormer, dataset: Dataset, split: str = "test",
             batch_size: int = 64) -> tuple[Metrics, ScoreFile]:
    x, y, idx = dataset.subset(split)
    if len(x) == 0:
        raise ValueError(f"split {split!r} is empty")
    scores = model.predict_scores(x, batch_size)
    ids = [dataset.sources[i] for i in idx]
    return metrics_from_scores(scores, y, dataset.num_classes), ScoreFile(ids, scores)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainResult:
    log: list
    best_val: float
    best_epoch: int

    def log_csv(self) -> str:
        lines = ["epoch,lr,loss,train_acc,val_acc"]
        for r in self.log:
            val = "" if r["val_acc"] is None else repr(r["val_acc"])
            lines.append(f"{r['epoch']},{r['lr']!r},{r['loss']!r},{r['train_acc']!r},{val}")
        return "\n".join(lines) + "\n"


def train_step(model: FreqMixFormer, opt: nx.SGD, x, y, lr: float) -> tuple[float, int]:
    tape = nx.GradientTape()
    logits = model.forward(x, tape)
    loss = nx.cross_entropy(logits, y)
    tape.backward(loss)
    opt.step(lr)
    correct = int((nx.value_of(logits).argmax(axis=1) == y).sum())
    return float(nx.value_of(loss)), correct


def train(model: FreqMixFormer, dataset: Dataset, schedule: TrainingSchedule,
          out_dir=None, validate: bool = True, keep_epoch_checkpoints: bool = True) -> TrainResult:
    """Seeded mini-batch SGD with cross-entropy; optional per-epoch checkpoints."""
    x, y, _ = dataset.subset("train")
    if len(x) == 0:
        raise ValueError("dataset has no training samples")
    has_val = validate and len(dataset.indices("test")) > 0
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rng = nx.make_rng(schedule.seed)
    opt = nx.SGD(model.parameters(), schedule.momentum, schedule.weight_decay, schedule.clip_norm)
    rows, best, best_epoch = [], -1.0, -1
    for epoch in range(schedule.epochs):
        lr = lr_at(schedule, epoch)
        order = rng.permutation(len(x))
        tot_loss, tot_correct = 0.0, 0
        for bi, start in enumerate(range(0, len(x), schedule.batch_size)):
            sel = order[start:start + schedule.batch_size]
            try:
                loss, correct = train_step(model, opt, x[sel], y[sel], lr)
            except nx.NonFiniteError as e:
                raise DivergenceError(f"epoch {epoch} batch {bi}: {e}") from None
            if not np.isfinite(loss):
                raise DivergenceError(f"epoch {epoch} batch {bi}: non-finite loss")
            tot_loss += loss * len(sel)
            tot_correct += correct
        val = evaluate(model, dataset, "test")[0].top1 if has_val else None
        row = {"epoch": epoch, "lr": lr, "loss": tot_loss / len(x),
               "train_acc": tot_correct / len(x), "val_acc": None if val is None else float(val)}
        rows.append(row)
        log.info("epoch %d lr %.5g loss %.4f train %.3f val %s", epoch, lr, row["loss"], row["train_acc"], val)
        score = val if val is not None else row["train_acc"]
        improved = score > best
        if improved:
            best, best_epoch = score, epoch
        if out is not None:
            if keep_epoch_checkpoints:
                model.save(out / f"epoch{epoch:03d}.ckpt")
            model.save(out / "last.ckpt")
            if improved:
                model.save(out / "best.ckpt")
    result = TrainResult(rows, best, best_epoch)
    if out is not None:
        (out / "log.csv").write_text(result.log_csv())
    return result


# ---------------------------------------------------------------------------
# gradient checking

@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    per_param: dict
    checked: int

    def __str__(self):
        return (f"max relative error {self.max_rel_error:.3e} at {self.worst_param}{list(self.worst_index)} "
                f"over {self.checked} entries")


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    """|a - b| / max(|a|, |b|, floor); the floor keeps vanishing gradients from dividing by ~0."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check_fn(params, loss_fn, epsilon: float = 1e-5, corrupt: str | None = None,
                  warn_above: int = 10_000) -> GradCheckReport:
    """Compare tape gradients to central differences for every parameter entry.

    ``loss_fn(tape)`` must return the scalar loss, recorded when ``tape`` is given.
    ``corrupt`` names a parameter whose analytic gradient is perturbed (fault injection).
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    params = list(params)
    total = sum(p.size for p in params)
    if total > warn_above:
        warnings.warn(f"gradient check over {total} parameters will be slow", stacklevel=2)
    tape = nx.GradientTape()
    tape.backward(loss_fn(tape))
    analytic = {p.name: p.gradient.copy() for p in params}
    if corrupt is not None:
        analytic[corrupt] = analytic[corrupt] + 1.0
    per, worst = {}, (-1.0, "", ())
    for p in params:
        pmax = 0.0
        for idx in np.ndindex(p.shape):
            old = p.value[idx]
            p.value[idx] = old + epsilon
            lp = float(nx.value_of(loss_fn(None)))
            p.value[idx] = old - epsilon
            lm = float(nx.value_of(loss_fn(None)))
            p.value[idx] = old
            err = relative_error((lp - lm) / (2 * epsilon), float(analytic[p.name][idx]))
            if err > pmax:
                pmax = err
            if err > worst[0]:
                worst = (err, p.name, idx)
        per[p.name] = pmax
        p.zero_grad()
    return GradCheckReport(worst[0], worst[1], worst[2], per, total)


def grad_check(model: FreqMixFormer, x, y, epsilon: float = 1e-5, corrupt: str | None = None) -> GradCheckReport:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim == 3:
        x, y = x[None], np.atleast_1d(y)

    def loss_fn(tape):
        return nx.cross_entropy(model.forward(x, tape), y)

    return grad_check_fn(model.parameters(), loss_fn, epsilon, corrupt)


# ---------------------------------------------------------------------------
# difficulty sets

HARD_BELOW = 0.80
EASY_ABOVE = 0.90


def difficulty_report(per_class_accuracy) -> dict[str, list[int]]:
    """Hard: acc < 0.80; Medium: 0.80 <= acc <= 0.90; Easy: acc > 0.90."""
    acc = np.asarray(per_class_accuracy, dtype=np.float64)
    if np.any((acc < 0) | (acc > 1)) or not np.all(np.isfinite(acc)):
        raise ValueError("per-class accuracies must lie in [0, 1]")
    out = {"Hard": [], "Medium": [], "Easy": []}
    for c, a in enumerate(acc):
        if a < HARD_BELOW:
            out["Hard"].append(c)
        elif a <= EASY_ABOVE:
            out["Medium"].append(c)
        else:
            out["Easy"].append(c)
    return out


def difficulty_means(per_class_accuracy) -> dict[str, float]:
    acc = np.asarray(per_class_accuracy, dtype=np.float64)
    return {k: (float(acc[v].mean()) if v else float("nan")) for k, v in difficulty_report(acc).items()}
