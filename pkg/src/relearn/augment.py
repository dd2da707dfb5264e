"""Feature-level augmentation: skip sampling over frames and masked Gaussian perturbation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .datamodel import RelearnError, mean_pool


@dataclass(frozen=True)
class NoiseStats:
    mu: np.ndarray
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise RelearnError("sigma must be non-negative")


@dataclass(frozen=True)
class AugmentConfig:
    stride: int = 12
    mask_prob: float = 0.5
    epsilon: float = 1.0
    enable_frame_level: bool = True
    enable_video_level: bool = False

    def __post_init__(self):
        if self.stride < 1:
            raise RelearnError("stride must be >= 1")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise RelearnError("mask_prob must lie in [0, 1]")
        if self.epsilon < 0:
            raise RelearnError("epsilon must be non-negative")


def estimate_noise_stats(features: Iterable[np.ndarray]) -> NoiseStats:
    """Per-dimension mean and a single pooled standard deviation over all components."""
    X = np.asarray(list(features), dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise RelearnError("noise statistics need a non-empty collection of vectors")
    return NoiseStats(mu=X.mean(axis=0), sigma=float(X.std()))


def skip_sample(frames, stride: int) -> list[np.ndarray]:
    """Full-sequence mean followed by one mean per stride offset.

    Offsets past the end of a short sequence select no frames and are dropped,
    so the result has ``min(stride, n) + 1`` entries.
    """
    if stride < 1:
        raise RelearnError("stride must be >= 1")
    frames = np.asarray(frames, dtype=float)
    out = [mean_pool(frames)]
    for start in range(min(stride, len(frames))):
        out.append(frames[start::stride].mean(axis=0))
    return out


def perturb(v, stats: NoiseStats, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != stats.mu.shape:
        raise RelearnError(f"vector has shape {v.shape}, noise mean has {stats.mu.shape}")
    mask = rng.random(v.shape) < cfg.mask_prob
    noise = rng.normal(stats.mu, stats.sigma)
    return v + cfg.epsilon * (mask * noise)


def augment_multilevel(frames, stats: NoiseStats | None, cfg: AugmentConfig,
                       rng: np.random.Generator) -> list[np.ndarray]:
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    if cfg.enable_frame_level:
        instances = skip_sample(frames, cfg.stride)
    else:
        instances = [mean_pool(frames)]
    if cfg.enable_video_level:
        if stats is None:
            raise RelearnError("video-level augmentation needs noise statistics")
        instances = [perturb(x, stats, cfg, rng) for x in instances]
    return instances
