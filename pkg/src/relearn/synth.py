"""Synthetic clustered datasets with planted relevance, and brute-force oracles.

The generator plants cluster structure in a low-dimensional subspace and
buries it under larger video-specific nuisance directions, then scrambles the
axes with a fixed rotation. Raw cosine similarity therefore ranks mostly by
nuisance, while a learned linear projection can recover the clusters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .datamodel import (Dataset, ProjectionModel, RelearnError, RelevanceTable, write_frame_features,
                        write_relevance, write_splits, write_video_features)
from .model import Gradients, LossConfig, TripletBatch, batch_similarities, loss_gradients, loss_value
from .predict import RankedList


@dataclass(frozen=True)
class SynthConfig:
    num_videos: int = 240
    num_clusters: int = 24
    d: int = 64
    min_frames: int = 20
    max_frames: int = 40
    noise: float = 3.0
    distractor: bool = True
    train_frac: float = 0.6
    val_frac: float = 0.2
    seed: int = 0
    # fraction of the d dimensions that carry cluster identity
    signal_frac: float = 0.5
    centroid_scale: float = 1.0
    spread: float = 0.8
    nuisance_scale: float = 2.0
    offset_scale: float = 0.0

    def __post_init__(self):
        if self.num_clusters < 2:
            raise RelearnError("num_clusters must be >= 2")
        if self.num_videos < 2 * self.num_clusters:
            raise RelearnError("num_videos must be at least twice num_clusters")
        if self.d < 2:
            raise RelearnError("d must be >= 2")
        if not 1 <= self.min_frames <= self.max_frames:
            raise RelearnError("need 1 <= min_frames <= max_frames")
        if self.noise < 0:
            raise RelearnError("noise must be non-negative")
        if self.train_frac <= 0 or self.val_frac < 0 or self.train_frac + self.val_frac > 1:
            raise RelearnError("bad split fractions")


@dataclass(frozen=True)
class SyntheticData:
    dataset: Dataset
    clusters: Mapping[str, int]


def _random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def generate(cfg: SynthConfig, rng: np.random.Generator | None = None) -> SyntheticData:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    N, C, d = cfg.num_videos, cfg.num_clusters, cfg.d
    k = max(1, min(d - 1, round(d * cfg.signal_frac)))
    width = len(str(N - 1))
    ids = [f"v{i:0{width}d}" for i in range(N)]

    # balanced assignment: every cluster gets floor(N/C) or ceil(N/C) >= 2 members
    assign = rng.permutation(np.arange(N) % C)

    centroids = rng.standard_normal((C, k)) * cfg.centroid_scale
    signal = centroids[assign] + cfg.spread * rng.standard_normal((N, k))
    nuisance = rng.standard_normal((N, d - k)) * cfg.nuisance_scale
    video_latent = np.hstack([signal, nuisance])

    if cfg.distractor:
        scales = np.concatenate([np.full(k, 0.5), np.exp(rng.uniform(np.log(0.5), np.log(2.0), d - k))])
        mix = _random_rotation(rng, d) * scales
        offset = rng.standard_normal(d) * cfg.offset_scale
    else:
        mix = np.hstack([np.eye(d)[:, :k] * 4.0, np.eye(d)[:, k:] * 0.25])
        offset = np.zeros(d)

    frames = {}
    for i, v in enumerate(ids):
        n = int(rng.integers(cfg.min_frames, cfg.max_frames + 1))
        latent = video_latent[i] + cfg.noise * rng.standard_normal((n, d))
        frames[v] = latent @ mix.T + offset
        frames[v].flags.writeable = False

    lists = {}
    for c in range(C):
        members = np.flatnonzero(assign == c)
        for i in members:
            others = [j for j in members if j != i]
            dist = [float(np.sum((signal[i] - signal[j]) ** 2)) for j in others]
            order = sorted(range(len(others)), key=lambda t: (dist[t], ids[others[t]]))
            lists[ids[i]] = tuple(ids[others[t]] for t in order)

    n_train = round(cfg.train_frac * N)
    n_val = round(cfg.val_frac * N)
    perm = rng.permutation(N)
    split = {}
    for rank, i in enumerate(perm):
        split[ids[i]] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    split = {v: split[v] for v in ids}

    dataset = Dataset.from_frames(frames, RelevanceTable(lists, split))
    return SyntheticData(dataset, {v: int(assign[i]) for i, v in enumerate(ids)})


def write_synthetic(data: SyntheticData, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.tsv" for name in ("frames", "features", "relevance", "splits")}
    ds = data.dataset
    write_frame_features(paths["frames"], ds.frames)
    write_video_features(paths["features"], ds.features)
    write_relevance(paths["relevance"], ds.relevance.lists)
    write_splits(paths["splits"], ds.relevance.split)
    return paths


def _naive_cosine(u, w) -> float:
    dot = sum(float(a) * float(b) for a, b in zip(u, w))
    nu = math.sqrt(sum(float(a) * float(a) for a in u))
    nw = math.sqrt(sum(float(b) * float(b) for b in w))
    if nu == 0 or nw == 0:
        raise RelearnError("cosine similarity is undefined for a zero vector")
    return dot / (nu * nw)


def oracle_rank_raw(features: Mapping[str, np.ndarray], seed: str, candidates: Iterable[str],
                    k: int | None = None) -> RankedList:
    """Exhaustive raw-space cosine ranking in plain Python; ties broken by id."""
    if seed not in features:
        raise RelearnError(f"no features for seed {seed!r}")
    scored = [(c, _naive_cosine(features[seed], features[c])) for c in candidates if c != seed]
    scored.sort(key=lambda t: (-t[1], t[0]))
    return RankedList(seed, tuple(scored if k is None else scored[:k]))


def _objective(W, b, batch: TripletBatch, cfg: LossConfig) -> float:
    total = 0.0
    for a, p, n in zip(batch.anchors, batch.positives, batch.negatives):
        ua, up, un = W @ a + b, W @ p + b, W @ n + b
        total += loss_value(_naive_cosine(ua, up), _naive_cosine(ua, un), cfg)
    return total


def finite_diff_gradients(model: ProjectionModel, batch: TripletBatch, cfg: LossConfig,
                          h: float = 1e-5) -> Gradients:
    """Central finite differences of the summed batch loss, one parameter at a time."""
    if h <= 0:
        raise RelearnError("h must be positive")
    W, b = model.W.copy(), model.b.copy()
    dW = np.zeros_like(W)
    db = np.zeros_like(b)
    for idx in np.ndindex(W.shape):
        orig = W[idx]
        W[idx] = orig + h
        up = _objective(W, b, batch, cfg)
        W[idx] = orig - h
        down = _objective(W, b, batch, cfg)
        W[idx] = orig
        dW[idx] = (up - down) / (2 * h)
    for i in range(len(b)):
        orig = b[i]
        b[i] = orig + h
        up = _objective(W, b, batch, cfg)
        b[i] = orig - h
        down = _objective(W, b, batch, cfg)
        b[i] = orig
        db[i] = (up - down) / (2 * h)
    return Gradients(dW, db)


def _hinge_arguments(model: ProjectionModel, batch: TripletBatch, cfg: LossConfig) -> np.ndarray:
    cs_pos, cs_neg = batch_similarities(model, batch)
    return np.concatenate([cfg.m1 - cs_pos + cs_neg, cs_neg - cfg.m2, cs_neg - cfg.m1])


def gradient_check(seed: int, trials: int = 100, d: int = 4, p: int = 3, batch_size: int = 2,
                   kinds: Iterable[str] = ("trl", "netrl", "contrastive"), kink_margin: float = 1e-3,
                   h: float = 1e-5) -> list[tuple[str, float]]:
    """Compare analytic and finite-difference gradients on random draws.

    Draws whose hinge arguments fall within ``kink_margin`` of zero, or whose
    loss is zero, are redrawn. Returns ``(kind, relative_error)`` per trial.
    """
    rng = np.random.default_rng(seed)
    kinds = tuple(kinds)
    out = []
    while len(out) < trials:
        kind = kinds[len(out) % len(kinds)]
        model = ProjectionModel(rng.standard_normal((p, d)), rng.standard_normal(p) * 0.1)
        batch = TripletBatch(*(rng.standard_normal((batch_size, d)) for _ in range(3)))
        cfg = LossConfig(kind=kind, m1=float(rng.uniform(0.05, 0.5)), m2=float(rng.uniform(-0.5, 0.5)),
                         alpha=float(rng.uniform(0.0, 2.0)))
        if np.min(np.abs(_hinge_arguments(model, batch, cfg))) < kink_margin:
            continue
        loss, grads = loss_gradients(model, batch, cfg)
        if loss == 0.0:
            continue
        fd = finite_diff_gradients(model, batch, cfg, h=h)
        a = np.concatenate([grads.dW.ravel(), grads.db])
        f = np.concatenate([fd.dW.ravel(), fd.db])
        out.append((kind, float(np.max(np.abs(a - f)) / max(np.max(np.abs(f)), 1e-8))))
    return out
