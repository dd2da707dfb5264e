"""Helpers shared by the experiment scripts."""

import argparse

import numpy as np

from relearn.augment import AugmentConfig
from relearn.evaluation import evaluate
from relearn.model import LossConfig
from relearn.synth import SynthConfig, generate
from relearn.train import TrainConfig, train


def base_parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seeds", type=int, default=5, help="number of dataset/training seeds")
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--projection-dim", type=int, default=512)
    return p


def dataset(seed: int):
    return generate(SynthConfig(seed=seed)).dataset


def fit(ds, seed: int, kind: str = "netrl", stride=None, max_epochs: int = 50, projection_dim: int = 512,
        val_every: int = 0):
    aug = AugmentConfig(enable_frame_level=False) if stride is None else AugmentConfig(stride=stride)
    cfg = TrainConfig(projection_dim=projection_dim, max_epochs=max_epochs, loss=LossConfig(kind=kind),
                      augment=aug, seed=seed, val_every=val_every)
    return train(cfg, ds)


def val_sum(model, ds, **kw) -> float:
    return evaluate(model, ds, "val", **kw).sum


def summary(values) -> str:
    values = np.asarray(values, dtype=float)
    return f"{values.mean():.4f} +- {values.std(ddof=1) if len(values) > 1 else 0.0:.4f}"
