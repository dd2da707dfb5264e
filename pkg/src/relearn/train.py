"""Triplet sampling, Adam updates and the epoch loop with LR halving and early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, TextIO

import numpy as np

from .augment import AugmentConfig, augment_multilevel, estimate_noise_stats
from .datamodel import Dataset, ProjectionModel, RelearnError, RelevanceTable
from .evaluation import evaluate
from .model import LossConfig, TripletBatch, batch_losses, loss_gradients

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    projection_dim: int = 512
    batch_size: int = 32
    initial_lr: float = 0.001
    lr_halve_patience: int = 3
    early_stop_patience: int = 10
    max_epochs: int = 50
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    # record validation Sum every this many iterations; 0 disables
    val_every: int = 0

    def __post_init__(self):
        for name in ("projection_dim", "batch_size", "lr_halve_patience", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise RelearnError(f"{name} must be positive")
        if self.max_epochs < 0 or self.val_every < 0:
            raise RelearnError("max_epochs and val_every must be non-negative")
        if not self.initial_lr > 0:
            raise RelearnError("initial_lr must be positive")


@dataclass
class AdamState:
    mW: np.ndarray
    vW: np.ndarray
    mb: np.ndarray
    vb: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, model: ProjectionModel) -> "AdamState":
        return cls(np.zeros_like(model.W), np.zeros_like(model.W), np.zeros_like(model.b), np.zeros_like(model.b))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_sum: float
    lr: float
    iterations: int

    def line(self) -> str:
        return f"{self.epoch}\t{self.train_loss:.10g}\t{self.val_loss:.10g}\t{self.val_sum:.10g}\t{self.lr:.10g}\t{self.iterations}"


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    # (iteration, validation Sum) pairs when TrainConfig.val_every > 0
    checkpoints: list[tuple[int, float]] = field(default_factory=list)
    best_epoch: int = 0

    def lines(self) -> list[str]:
        return [r.line() for r in self.epochs]


class TrainingError(RelearnError):
    def __init__(self, message: str, history: TrainHistory):
        super().__init__(message)
        self.history = history


def _as_instances(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def sample_triplets(rel: RelevanceTable, instances: Mapping[str, np.ndarray], rng: np.random.Generator,
                    batch_size: int = 32, pool_splits=("train",), anchor_splits=None) -> Iterator[TripletBatch]:
    """One epoch of shuffled triplets, chunked into batches.

    ``instances[v]`` holds one or more feature vectors of video ``v`` (rows of an
    (m, d) array, or a single (d,) vector). Every instance of an anchor is
    paired once with each of its positives inside the pool; the positive
    instance and the negative video (and its instance) are drawn uniformly.
    Anchors come from ``anchor_splits`` (default: the pool splits).
    """
    pool = [v for v in rel.ids_in(*pool_splits) if v in instances]
    anchors = pool if anchor_splits is None else [v for v in rel.ids_in(*anchor_splits) if v in instances]
    inst = {v: _as_instances(instances[v]) for v in set(pool) | set(anchors)}
    pool_set = set(pool)
    pool_arr = np.array(pool, dtype=object)

    pairs = []
    negatives_for = {}
    for v in anchors:
        positives = [r for r in rel.relevant(v) if r in pool_set]
        if not positives:
            continue
        excluded = set(rel.relevant(v)) | {v}
        eligible = np.array([u not in excluded for u in pool])
        if not eligible.any():
            raise RelearnError(f"no legal negative for anchor {v!r}: its relevance list covers the whole pool")
        negatives_for[v] = pool_arr[eligible]
        for i in range(len(inst[v])):
            pairs.extend((v, i, r) for r in positives)
    if not pairs:
        return

    order = rng.permutation(len(pairs))
    for start in range(0, len(order), batch_size):
        chunk = [pairs[j] for j in order[start:start + batch_size]]
        u = rng.random((len(chunk), 3))
        a_rows, p_rows, n_rows, n_ids = [], [], [], []
        for (v, i, r), (un, up, ui) in zip(chunk, u):
            neg = negatives_for[v][int(un * len(negatives_for[v]))]
            a_rows.append(inst[v][i])
            p_rows.append(inst[r][int(up * len(inst[r]))])
            n_rows.append(inst[neg][int(ui * len(inst[neg]))])
            n_ids.append(neg)
        yield TripletBatch(np.array(a_rows), np.array(p_rows), np.array(n_rows),
                           tuple(c[0] for c in chunk), tuple(c[2] for c in chunk), tuple(n_ids))


def hard_negative_select(batch: TripletBatch, model: ProjectionModel, rel: RelevanceTable) -> TripletBatch:
    """Swap each negative for the most similar irrelevant vector elsewhere in the batch.

    Candidates are the positives and negatives of the other triplets, in batch
    order (positive before negative), so ties go to the lowest batch index.
    Anchors without any eligible candidate keep their original negative.
    """
    B = len(batch)
    if B < 2:
        return batch
    cand = np.empty((2 * B, batch.anchors.shape[1]))
    cand[0::2] = batch.positives
    cand[1::2] = batch.negatives
    cand_ids = [x for pair in zip(batch.positive_ids, batch.negative_ids) for x in pair]
    owner = np.repeat(np.arange(B), 2)

    U = batch.anchors @ model.W.T + model.b
    C = cand @ model.W.T + model.b
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    C = C / np.linalg.norm(C, axis=1, keepdims=True)
    sims = U @ C.T

    negatives = batch.negatives.copy()
    neg_ids = list(batch.negative_ids)
    for i, v in enumerate(batch.anchor_ids):
        excluded = set(rel.relevant(v)) | {v}
        ok = (owner != i) & np.array([c not in excluded for c in cand_ids])
        if not ok.any():
            continue
        j = int(np.argmax(np.where(ok, sims[i], -np.inf)))
        negatives[i] = cand[j]
        neg_ids[i] = cand_ids[j]
    return TripletBatch(batch.anchors, batch.positives, negatives,
                        batch.anchor_ids, batch.positive_ids, tuple(neg_ids))


def adam_step(model: ProjectionModel, grads, state: AdamState, lr: float):
    """Bias-corrected Adam update; returns a new model and state."""
    if not (np.all(np.isfinite(grads.dW)) and np.all(np.isfinite(grads.db))):
        raise RelearnError("non-finite gradient")
    b1, b2, eps = state.beta1, state.beta2, state.eps
    t = state.step + 1
    c1, c2 = 1 - b1 ** t, 1 - b2 ** t
    out = []
    for param, g, m, v in ((model.W, grads.dW, state.mW, state.vW), (model.b, grads.db, state.mb, state.vb)):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * (g * g)
        denom = np.sqrt(v / c2)
        denom += eps
        out.append((param - (lr / c1) * m / denom, m, v))
    (W, mW, vW), (b, mb, vb) = out
    return ProjectionModel(W, b), AdamState(mW, vW, mb, vb, t, b1, b2, eps)


def validation_triplets(dataset: Dataset, rng: np.random.Generator) -> TripletBatch | None:
    """Fixed un-augmented triplets anchored on val videos, candidates from train and val."""
    batches = list(sample_triplets(dataset.relevance, dataset.features, rng, batch_size=1 << 62,
                                   pool_splits=("train", "val"), anchor_splits=("val",)))
    return batches[0] if batches else None


def _training_instances(dataset: Dataset, ids, stats, cfg: AugmentConfig, rng) -> dict[str, np.ndarray]:
    out = {}
    for v in ids:
        frames = dataset.frames.get(v) if dataset.frames is not None else None
        if frames is None:
            # no frame sequence to sub-sample; only video-level noise applies
            out[v] = np.stack(augment_multilevel(dataset.features[v][None, :], stats,
                                                 replace(cfg, enable_frame_level=False), rng))
        else:
            out[v] = np.stack(augment_multilevel(frames, stats, cfg, rng))
    return out


def train(cfg: TrainConfig, dataset: Dataset, log_to: TextIO | None = None):
    """Fit a projection and return the snapshot with the best validation Sum.

    Learning rate is halved when validation loss stalls for ``lr_halve_patience``
    epochs; training stops when validation Sum stalls for ``early_stop_patience``.
    """
    rng = np.random.default_rng(cfg.seed)
    model = ProjectionModel.init(dataset.dim, cfg.projection_dim, rng)
    history = TrainHistory()
    if cfg.max_epochs == 0:
        return model, history

    train_ids = dataset.relevance.ids_in("train")
    if not train_ids:
        raise RelearnError("training split is empty")
    if not any(dataset.relevance.relevant(v) for v in train_ids):
        raise RelearnError("no training video has a relevance list; nothing to learn from")
    if dataset.frames is None and cfg.augment.enable_frame_level:
        log.warning("no frame-level features; frame-level augmentation is skipped")

    stats = None
    if cfg.augment.enable_video_level:
        stats = estimate_noise_stats(dataset.features[v] for v in train_ids)
    val_batch = validation_triplets(dataset, np.random.default_rng([cfg.seed, 1]))
    if val_batch is None:
        raise RelearnError("validation split has no usable triplets")

    state = AdamState.zeros_like(model)
    lr = cfg.initial_lr
    iterations = 0
    best_sum, best_model = -math.inf, model.copy()
    best_val_loss = math.inf
    loss_stall = sum_stall = 0

    for epoch in range(1, cfg.max_epochs + 1):
        instances = _training_instances(dataset, train_ids, stats, cfg.augment, rng)
        total, count = 0.0, 0
        for batch in sample_triplets(dataset.relevance, instances, rng, cfg.batch_size):
            if cfg.loss.kind == "itrl":
                batch = hard_negative_select(batch, model, dataset.relevance)
            loss, grads = loss_gradients(model, batch, cfg.loss)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}", history)
            try:
                model, state = adam_step(model, grads, state, lr)
            except RelearnError as exc:
                raise TrainingError(f"{exc} at epoch {epoch}", history) from None
            iterations += 1
            total += loss
            count += len(batch)
            if cfg.val_every and iterations % cfg.val_every == 0:
                history.checkpoints.append((iterations, evaluate(model, dataset, "val").sum))
        if count == 0:
            raise RelearnError("no training triplets could be formed")

        val_loss = float(batch_losses(model, val_batch, cfg.loss).mean())
        val_sum = evaluate(model, dataset, "val").sum
        record = EpochRecord(epoch, total / count, val_loss, val_sum, lr, iterations)
        history.epochs.append(record)
        if log_to is not None:
            log_to.write(record.line() + "\n")
        log.debug("epoch %s", record.line())

        if val_sum > best_sum:
            best_sum, best_model, history.best_epoch = val_sum, model.copy(), epoch
            sum_stall = 0
        else:
            sum_stall += 1
        if val_loss < best_val_loss:
            best_val_loss = val_loss
            loss_stall = 0
        else:
            loss_stall += 1
            if loss_stall >= cfg.lr_halve_patience:
                lr /= 2
                loss_stall = 0
        if sum_stall >= cfg.early_stop_patience:
            break
    return best_model, history

