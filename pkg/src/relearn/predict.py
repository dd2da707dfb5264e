"""Relevance scoring and top-k ranking in the re-learned space."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .datamodel import ProjectionModel, RelearnError
from .model import project


@dataclass(frozen=True)
class RankedList:
    seed: str
    entries: tuple[tuple[str, float], ...]

    @property
    def ids(self) -> list[str]:
        return [v for v, _ in self.entries]


class CandidateIndex:
    """Unit-normalised projections of a fixed candidate pool.

    Ids are kept in lexicographic order so a stable sort on scores gives the
    lexicographic tie-break for free.
    """

    def __init__(self, model: ProjectionModel, ids: Sequence[str], projected: np.ndarray):
        self.model = model
        self.ids = list(ids)
        self.projected = projected
        self.projected.flags.writeable = False
        self.row = {v: i for i, v in enumerate(self.ids)}
        self._neighbor_cache: dict = {}

    def __len__(self):
        return len(self.ids)

    def __contains__(self, v):
        return v in self.row

    def embed(self, v) -> np.ndarray:
        """Normalised projection of a raw feature vector."""
        u = project(self.model, v)
        norm = np.linalg.norm(u)
        if norm == 0:
            raise RelearnError("zero-norm projection")
        return u / norm

    def neighbor_rows(self, neighbors: Mapping[str, Sequence[str]], n: int):
        """Padded (C, n) row indices of each candidate's first ``n`` known relevant videos."""
        key = (id(neighbors), n)
        if key in self._neighbor_cache:
            return self._neighbor_cache[key]
        idx = np.zeros((len(self.ids), max(n, 0)), dtype=np.int64)
        mask = np.zeros((len(self.ids), max(n, 0)), dtype=bool)
        for i, v in enumerate(self.ids):
            rows = [self.row[r] for r in neighbors.get(v, ()) if r in self.row][:n]
            idx[i, : len(rows)] = rows
            mask[i, : len(rows)] = True
        self._neighbor_cache[key] = (neighbors, idx, mask)
        return self._neighbor_cache[key]


def build_candidate_index(model: ProjectionModel, features: Mapping[str, np.ndarray],
                          ids: Iterable[str]) -> CandidateIndex:
    ids = sorted(ids)
    if not ids:
        raise RelearnError("candidate set is empty")
    missing = [v for v in ids if v not in features]
    if missing:
        raise RelearnError(f"no features for candidate {missing[0]!r}")
    U = project(model, np.stack([features[v] for v in ids]))
    norms = np.linalg.norm(U, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise RelearnError(f"zero-norm projection for candidate {ids[zero[0]]!r}")
    return CandidateIndex(model, ids, U / norms[:, None])


def _row(index: CandidateIndex, candidate: str) -> int:
    try:
        return index.row[candidate]
    except KeyError:
        raise RelearnError(f"unknown candidate {candidate!r}") from None


def relevance_strategy1(index: CandidateIndex, seed_phi: np.ndarray, candidate: str) -> float:
    return float(index.projected[_row(index, candidate)] @ seed_phi)


def relevance_strategy2(index: CandidateIndex, seed_phi: np.ndarray, candidate: str,
                        neighbors: Mapping[str, Sequence[str]], n: int) -> float:
    score = relevance_strategy1(index, seed_phi, candidate)
    known = [r for r in neighbors.get(candidate, ()) if r in index]
    for r in known[:n]:
        score += relevance_strategy1(index, seed_phi, r)
    return score


def score_all(index: CandidateIndex, seed_phi: np.ndarray, strategy: int = 1,
              neighbors: Mapping[str, Sequence[str]] | None = None, n: int = 0) -> np.ndarray:
    """Scores of every indexed candidate, aligned with ``index.ids``."""
    s1 = index.projected @ seed_phi
    if strategy == 1 or n == 0 or not neighbors:
        if strategy not in (1, 2):
            raise RelearnError(f"unknown strategy {strategy}")
        return s1
    if strategy != 2:
        raise RelearnError(f"unknown strategy {strategy}")
    if n < 0:
        raise RelearnError("n must be non-negative")
    _, idx, mask = index.neighbor_rows(neighbors, n)
    return s1 + np.where(mask, s1[idx], 0.0).sum(axis=1)


def rank_candidates(index: CandidateIndex, seed: str, k: int, seed_feature=None, strategy: int = 1,
                    neighbors: Mapping[str, Sequence[str]] | None = None, n: int = 0) -> RankedList:
    """Top-``k`` candidates for ``seed``, excluding the seed itself.

    ``seed_feature`` is the raw feature of the seed; it may be omitted when
    the seed is itself part of the index.
    """
    if k < 1:
        raise RelearnError("k must be >= 1")
    if seed_feature is not None:
        seed_phi = index.embed(seed_feature)
    elif seed in index:
        seed_phi = index.projected[index.row[seed]]
    else:
        raise RelearnError(f"no features for seed {seed!r}")
    scores = score_all(index, seed_phi, strategy, neighbors, n)
    order = np.argsort(-scores, kind="stable")
    skip = index.row.get(seed, -1)
    top = [i for i in order[: k + 1] if i != skip][:k]
    return RankedList(seed, tuple((index.ids[i], float(scores[i])) for i in top))
