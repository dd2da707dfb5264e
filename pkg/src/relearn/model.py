"""Affine projection, cosine relevance, ranking losses and their analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datamodel import ProjectionModel, RelearnError

LOSS_KINDS = ("trl", "itrl", "netrl", "contrastive")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "netrl"
    m1: float = 0.2
    m2: float = 0.05
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise RelearnError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if not self.m2 < 1.0:
            raise RelearnError("m2 must be smaller than 1")
        if self.alpha < 0:
            raise RelearnError("alpha must be non-negative")


@dataclass
class Gradients:
    dW: np.ndarray
    db: np.ndarray


@dataclass
class TripletBatch:
    """Rows of ``anchors``, ``positives`` and ``negatives`` form the triplets.

    The id tuples are carried along so hard-negative mining can respect
    relevance lists; they may be empty for anonymous batches.
    """

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    anchor_ids: tuple[str, ...] = field(default=())
    positive_ids: tuple[str, ...] = field(default=())
    negative_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        shapes = {self.anchors.shape, self.positives.shape, self.negatives.shape}
        if len(shapes) != 1 or self.anchors.ndim != 2:
            raise RelearnError(f"triplet arrays disagree in shape: {sorted(shapes)}")
        if len(self.anchors) == 0:
            raise RelearnError("empty triplet batch")

    def __len__(self):
        return len(self.anchors)


def cosine_similarity(u, w) -> float:
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.shape != w.shape:
        raise RelearnError(f"dimension mismatch {u.shape} vs {w.shape}")
    nu, nw = np.linalg.norm(u), np.linalg.norm(w)
    if nu == 0 or nw == 0:
        raise RelearnError("cosine similarity is undefined for a zero vector")
    return float(np.clip(u @ w / (nu * nw), -1.0, 1.0))


def project(model: ProjectionModel, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    model.check_dim(v.shape[-1])
    return v @ model.W.T + model.b


def _loss_terms(cs_pos, cs_neg, cfg: LossConfig):
    """Per-triplet loss and its partial derivatives w.r.t. the two similarities."""
    cs_pos = np.asarray(cs_pos, dtype=float)
    cs_neg = np.asarray(cs_neg, dtype=float)
    if cfg.kind == "contrastive":
        hinge = cs_neg - cfg.m1
        active = hinge > 0
        loss = (1.0 - cs_pos) + np.where(active, hinge, 0.0)
        return loss, -np.ones_like(cs_pos), active.astype(float)
    rank = cfg.m1 - cs_pos + cs_neg
    active = rank > 0
    loss = np.where(active, rank, 0.0)
    d_pos = -active.astype(float)
    d_neg = active.astype(float)
    if cfg.kind == "netrl":
        push = cs_neg - cfg.m2
        push_active = push > 0
        loss = loss + cfg.alpha * np.where(push_active, push, 0.0)
        d_neg = d_neg + cfg.alpha * push_active
    return loss, d_pos, d_neg


def loss_value(cs_pos: float, cs_neg: float, cfg: LossConfig) -> float:
    """Loss of one triplet given its positive and negative similarities.

    ``itrl`` shares the plain triplet formula; it differs only in how the
    negative is chosen.
    """
    return float(_loss_terms(cs_pos, cs_neg, cfg)[0])


def _normalize_rows(U):
    norms = np.linalg.norm(U, axis=1)
    if np.any(norms == 0):
        raise RelearnError("zero-norm projected vector; cosine similarity undefined")
    return U / norms[:, None], norms


def _cos_and_grads(U, V):
    """Row-wise cosine and its gradients with respect to each argument."""
    Un, nu = _normalize_rows(U)
    Vn, nv = _normalize_rows(V)
    cs = np.einsum("ij,ij->i", Un, Vn)
    dU = (Vn - cs[:, None] * Un) / nu[:, None]
    dV = (Un - cs[:, None] * Vn) / nv[:, None]
    return cs, dU, dV


def batch_similarities(model: ProjectionModel, batch: TripletBatch):
    model.check_dim(batch.anchors.shape[1])
    Ua = project(model, batch.anchors)
    Un, _ = _normalize_rows(Ua)
    Pn, _ = _normalize_rows(project(model, batch.positives))
    Nn, _ = _normalize_rows(project(model, batch.negatives))
    return np.einsum("ij,ij->i", Un, Pn), np.einsum("ij,ij->i", Un, Nn)


def batch_losses(model: ProjectionModel, batch: TripletBatch, cfg: LossConfig) -> np.ndarray:
    cs_pos, cs_neg = batch_similarities(model, batch)
    return _loss_terms(cs_pos, cs_neg, cfg)[0]


def loss_gradients(model: ProjectionModel, batch: TripletBatch, cfg: LossConfig):
    """Summed loss over the batch and exact gradients w.r.t. ``W`` and ``b``.

    Hinges contribute a zero subgradient at the kink.
    """
    model.check_dim(batch.anchors.shape[1])
    B = len(batch)
    X = np.concatenate([batch.anchors, batch.positives, batch.negatives])
    U = X @ model.W.T + model.b
    Ua, Up, Un = U[:B], U[B:2 * B], U[2 * B:]

    cs_pos, dpos_a, dpos_p = _cos_and_grads(Ua, Up)
    cs_neg, dneg_a, dneg_n = _cos_and_grads(Ua, Un)
    loss, c_pos, c_neg = _loss_terms(cs_pos, cs_neg, cfg)

    G = np.concatenate([c_pos[:, None] * dpos_a + c_neg[:, None] * dneg_a,
                        c_pos[:, None] * dpos_p,
                        c_neg[:, None] * dneg_n])
    return float(loss.sum()), Gradients(G.T @ X, G.sum(axis=0))
