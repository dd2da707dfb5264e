"""recall@k, hit@k and the eight-metric panel used for model selection and reporting."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .datamodel import Dataset, ProjectionModel, RelearnError
from .predict import RankedList, build_candidate_index, rank_candidates

log = logging.getLogger(__name__)

HIT_KS = (5, 10, 20, 30)
RECALL_KS = (50, 100, 200, 300)
METRIC_NAMES = tuple(f"hit@{k}" for k in HIT_KS) + tuple(f"recall@{k}" for k in RECALL_KS)


def _ids(ranked) -> Sequence[str]:
    return ranked.ids if isinstance(ranked, RankedList) else list(ranked)


def recall_at_k(ranked, truth: Iterable[str], k: int) -> float:
    truth = set(truth)
    if not truth:
        raise RelearnError("recall is undefined for an empty ground-truth list")
    if k < 1:
        raise RelearnError("k must be >= 1")
    return len(truth.intersection(_ids(ranked)[:k])) / len(truth)


def hit_at_k(ranked, truth: Iterable[str], k: int) -> int:
    return int(recall_at_k(ranked, truth, k) > 0)


@dataclass
class MetricsReport:
    hit: dict[int, float]
    recall: dict[int, float]
    num_seeds: int
    per_seed: dict[str, dict[str, float]] | None = field(default=None, repr=False)

    @property
    def sum(self) -> float:
        return float(sum(self.hit.values()) + sum(self.recall.values()))

    def values(self) -> list[float]:
        return [self.hit[k] for k in HIT_KS] + [self.recall[k] for k in RECALL_KS]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(METRIC_NAMES, self.values())) | {"Sum": self.sum}

    def row(self) -> str:
        return "\t".join("%.6f" % x for x in self.values() + [self.sum])

    @staticmethod
    def header() -> str:
        return "\t".join(METRIC_NAMES + ("Sum",))


def seed_metrics(ranked, truth: Sequence[str]) -> dict[str, float]:
    out = {f"hit@{k}": float(hit_at_k(ranked, truth, k)) for k in HIT_KS}
    out.update({f"recall@{k}": recall_at_k(ranked, truth, k) for k in RECALL_KS})
    return out


def aggregate(per_seed: Mapping[str, Mapping[str, float]], keep_per_seed: bool = False) -> MetricsReport:
    if not per_seed:
        raise RelearnError("no evaluable seeds")
    seeds = sorted(per_seed)
    means = {m: float(np.mean([per_seed[s][m] for s in seeds])) for m in METRIC_NAMES}
    return MetricsReport(
        hit={k: means[f"hit@{k}"] for k in HIT_KS},
        recall={k: means[f"recall@{k}"] for k in RECALL_KS},
        num_seeds=len(seeds),
        per_seed={s: dict(per_seed[s]) for s in seeds} if keep_per_seed else None,
    )


def candidate_ids(dataset: Dataset, split: str) -> list[str]:
    """Train and val videos when evaluating on val; every labelled video for test."""
    if split == "val":
        return dataset.relevance.ids_in("train", "val")
    if split == "test":
        return dataset.relevance.ids_in("train", "val", "test")
    if split == "train":
        return dataset.relevance.ids_in("train")
    raise RelearnError(f"unknown split {split!r}")


def known_neighbors(dataset: Dataset) -> dict[str, tuple[str, ...]]:
    """Candidate-to-candidate relations available to strategy 2.

    These are the ground-truth lists of train and val videos, i.e. the
    relations assumed known in the second scenario. A seed's own list is never
    used to score its candidates, but it may appear in a candidate's list.
    """
    rel = dataset.relevance
    return {v: rel.relevant(v) for v in rel.ids_in("train", "val") if rel.relevant(v)}


def add_feature_noise(features: Mapping[str, np.ndarray], coefficient: float,
                      rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Add ``coefficient * N(0, 1)`` noise to every vector, iterating ids in sorted order."""
    return {v: features[v] + coefficient * rng.standard_normal(features[v].shape) for v in sorted(features)}


def evaluate(model: ProjectionModel, dataset: Dataset, split: str = "val", strategy: int = 1, n: int = 0,
             features: Mapping[str, np.ndarray] | None = None, per_seed: bool = False) -> MetricsReport:
    """Mean of each metric over seeds of ``split`` that have a non-empty relevance list.

    ``features`` overrides the dataset's features, e.g. with noisy copies.
    """
    features = dataset.features if features is None else features
    index = build_candidate_index(model, features, candidate_ids(dataset, split))
    neighbors = known_neighbors(dataset) if strategy == 2 else None
    k = max(RECALL_KS)
    results = {}
    skipped = 0
    for seed in dataset.relevance.ids_in(split):
        truth = dataset.relevance.relevant(seed)
        if not truth:
            skipped += 1
            continue
        ranked = rank_candidates(index, seed, k, seed_feature=features[seed], strategy=strategy,
                                 neighbors=neighbors, n=n)
        results[seed] = seed_metrics(ranked, truth)
    if skipped:
        log.info("skipped %d %s seeds with empty relevance lists", skipped, split)
    return aggregate(results, keep_per_seed=per_seed)
