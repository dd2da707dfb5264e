"""Domain types and text file formats for features, relevance lists, splits and models.

All loaders are pure: they return fresh containers whose arrays are marked
read-only, so a loaded store can be shared between readers without copying.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

SPLITS = ("train", "val", "test")
MODEL_HEADER = "#relearn-model v1"


class RelearnError(Exception):
    """Base class for data and contract errors raised by this package."""


class ParseError(RelearnError, ValueError):
    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RelevanceTable:
    """Ranked ground-truth lists plus split labels.

    ``lists[v]`` is the ordered list of videos relevant to ``v``; ``split[v]`` is
    one of ``train``, ``val`` or ``test``. Videos with features but no list entry
    are legal and only ever act as candidates or negatives.
    """

    lists: Mapping[str, tuple[str, ...]]
    split: Mapping[str, str]

    def ids_in(self, *splits: str) -> list[str]:
        """Ids labelled with any of ``splits``, sorted lexicographically."""
        wanted = set(splits)
        return sorted(v for v, s in self.split.items() if s in wanted)

    def relevant(self, v: str) -> tuple[str, ...]:
        return self.lists.get(v, ())

    def validate(self, known_ids: Iterable[str]) -> None:
        known = set(known_ids)
        for v, rel in self.lists.items():
            if v not in known:
                raise RelearnError(f"relevance list for unknown video {v!r}")
            if v in rel:
                raise RelearnError(f"video {v!r} appears in its own relevance list")
            if len(set(rel)) != len(rel):
                raise RelearnError(f"duplicate entries in relevance list of {v!r}")
            missing = [r for r in rel if r not in known]
            if missing:
                raise RelearnError(f"relevance list of {v!r} references unknown video {missing[0]!r}")
        for v, s in self.split.items():
            if v not in known:
                raise RelearnError(f"split label for unknown video {v!r}")
            if s not in SPLITS:
                raise RelearnError(f"bad split {s!r} for {v!r}")


@dataclass(frozen=True)
class Dataset:
    """Video-level features, optional frame-level features and ground truth."""

    features: Mapping[str, np.ndarray]
    relevance: RelevanceTable
    frames: Mapping[str, np.ndarray] | None = None
    dim: int = field(init=False)

    def __post_init__(self):
        dims = {v.shape[-1] for v in self.features.values()}
        if len(dims) > 1:
            raise RelearnError(f"inconsistent feature dimensions {sorted(dims)}")
        object.__setattr__(self, "dim", dims.pop() if dims else 0)
        self.relevance.validate(self.features)

    @classmethod
    def from_frames(cls, frames: Mapping[str, np.ndarray], relevance: RelevanceTable) -> "Dataset":
        features = {v: _frozen(mean_pool(f)) for v, f in frames.items()}
        return cls(features=features, relevance=relevance, frames=frames)

    def matrix(self, ids: Iterable[str]) -> np.ndarray:
        ids = list(ids)
        if not ids:
            return np.zeros((0, self.dim))
        return np.stack([self.features[v] for v in ids])


@dataclass
class ProjectionModel:
    """Affine map ``phi(v) = W v + b`` from R^d into R^p."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise RelearnError(f"bad model shapes W{self.W.shape} b{self.b.shape}")

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def p(self) -> int:
        return self.W.shape[0]

    @classmethod
    def identity(cls, d: int) -> "ProjectionModel":
        return cls(np.eye(d), np.zeros(d))

    @classmethod
    def init(cls, d: int, p: int, rng: np.random.Generator, bias: float = 1e-3) -> "ProjectionModel":
        bound = 1.0 / math.sqrt(d)
        return cls(rng.uniform(-bound, bound, size=(p, d)), np.full(p, bias))

    def copy(self) -> "ProjectionModel":
        return ProjectionModel(self.W.copy(), self.b.copy())

    def check_dim(self, d: int) -> None:
        if d != self.d:
            raise RelearnError(f"model expects d={self.d} but features have d={d}")


def mean_pool(frames) -> np.ndarray:
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise RelearnError("mean pooling needs a non-empty (n, d) frame sequence")
    return frames.mean(axis=0)


# -- parsing -----------------------------------------------------------------


def _read_lines(path):
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return fh.read().splitlines()


def _parse_dim(path, lines) -> int:
    if not lines or not lines[0].startswith("#dim "):
        raise ParseError(path, 1, "expected header '#dim <d>'")
    try:
        d = int(lines[0][5:].strip())
    except ValueError:
        raise ParseError(path, 1, f"bad dimension in header {lines[0]!r}") from None
    if d < 1:
        raise ParseError(path, 1, "dimension must be positive")
    return d


def _parse_floats(path, lineno: int, text: str, d: int) -> np.ndarray:
    parts = text.split()
    if len(parts) != d:
        raise ParseError(path, lineno, f"expected {d} values, got {len(parts)}")
    try:
        values = np.array([float(x) for x in parts])
    except ValueError as exc:
        raise ParseError(path, lineno, str(exc)) from None
    if not np.all(np.isfinite(values)):
        raise ParseError(path, lineno, "non-finite feature value")
    return values


def _check_id(path, lineno: int, vid: str) -> str:
    if not vid or any(c.isspace() for c in vid):
        raise ParseError(path, lineno, f"bad video id {vid!r}")
    return vid


def load_video_features(path) -> dict[str, np.ndarray]:
    lines = _read_lines(path)
    d = _parse_dim(path, lines)
    out: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        vid, sep, rest = line.partition("\t")
        if not sep:
            raise ParseError(path, lineno, "expected '<video_id>\\t<values>'")
        vid = _check_id(path, lineno, vid)
        if vid in out:
            raise ParseError(path, lineno, f"duplicate video id {vid!r}")
        out[vid] = _frozen(_parse_floats(path, lineno, rest, d))
    return out


def load_frame_features(path) -> dict[str, np.ndarray]:
    lines = _read_lines(path)
    d = _parse_dim(path, lines)
    raw: dict[str, dict[int, np.ndarray]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(path, lineno, "expected '<video_id>\\t<frame_index>\\t<values>'")
        vid = _check_id(path, lineno, parts[0])
        try:
            idx = int(parts[1])
        except ValueError:
            raise ParseError(path, lineno, f"bad frame index {parts[1]!r}") from None
        if idx < 1:
            raise ParseError(path, lineno, "frame index must be >= 1")
        frames = raw.setdefault(vid, {})
        if idx in frames:
            raise ParseError(path, lineno, f"duplicate frame {idx} for {vid!r}")
        frames[idx] = _parse_floats(path, lineno, parts[2], d)
    out = {}
    for vid, frames in raw.items():
        n = max(frames)
        for i in range(1, n + 1):
            if i not in frames:
                raise RelearnError(f"{path}: video {vid!r} is missing frame {i}")
        out[vid] = _frozen(np.stack([frames[i] for i in range(1, n + 1)]))
    return out


def load_relevance(path) -> dict[str, tuple[str, ...]]:
    out: dict[str, tuple[str, ...]] = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        vid, sep, rest = line.partition("\t")
        if not sep:
            raise ParseError(path, lineno, "expected '<video_id>\\t<id>,<id>,...'")
        vid = _check_id(path, lineno, vid)
        if vid in out:
            raise ParseError(path, lineno, f"duplicate video id {vid!r}")
        rel = tuple(_check_id(path, lineno, r) for r in rest.strip().split(",")) if rest.strip() else ()
        if len(set(rel)) != len(rel):
            raise ParseError(path, lineno, "duplicate entry in relevance list")
        if vid in rel:
            raise ParseError(path, lineno, "video listed as relevant to itself")
        out[vid] = rel
    return out


def load_splits(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or parts[1].strip() not in SPLITS:
            raise ParseError(path, lineno, "expected '<video_id>\\t<train|val|test>'")
        vid = _check_id(path, lineno, parts[0])
        if vid in out:
            raise ParseError(path, lineno, f"duplicate video id {vid!r}")
        out[vid] = parts[1].strip()
    return out


def load_dataset(relevance, splits, features=None, frames=None) -> Dataset:
    """Load a dataset from files; frame-level features take precedence when given."""
    table = RelevanceTable(load_relevance(relevance), load_splits(splits))
    if frames is not None:
        return Dataset.from_frames(load_frame_features(frames), table)
    if features is None:
        raise RelearnError("either video-level or frame-level features are required")
    return Dataset(features=load_video_features(features), relevance=table)


# -- writing -----------------------------------------------------------------


def _fmt(values) -> str:
    return " ".join("%.17g" % x for x in values)


def format_video_features(features: Mapping[str, np.ndarray]) -> str:
    d = len(next(iter(features.values()))) if features else 0
    lines = [f"#dim {d}"]
    lines += [f"{v}\t{_fmt(x)}" for v, x in features.items()]
    return "\n".join(lines) + "\n"


def write_video_features(path, features: Mapping[str, np.ndarray]) -> None:
    Path(path).write_text(format_video_features(features), encoding="utf-8")


def write_frame_features(path, frames: Mapping[str, np.ndarray]) -> None:
    d = next(iter(frames.values())).shape[1] if frames else 0
    lines = [f"#dim {d}"]
    for v, seq in frames.items():
        lines += [f"{v}\t{i}\t{_fmt(row)}" for i, row in enumerate(seq, start=1)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_relevance(path, lists: Mapping[str, Iterable[str]]) -> None:
    text = "".join(f"{v}\t{','.join(rel)}\n" for v, rel in lists.items())
    Path(path).write_text(text, encoding="utf-8")


def write_splits(path, split: Mapping[str, str]) -> None:
    text = "".join(f"{v}\t{s}\n" for v, s in split.items())
    Path(path).write_text(text, encoding="utf-8")


def save_model(model: ProjectionModel, path) -> None:
    if not (np.all(np.isfinite(model.W)) and np.all(np.isfinite(model.b))):
        raise RelearnError("refusing to save a model with non-finite parameters")
    lines = [MODEL_HEADER, f"d={model.d} p={model.p}"]
    lines += [_fmt(row) for row in model.W]
    lines.append(_fmt(model.b))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> ProjectionModel:
    lines = _read_lines(path)
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise ParseError(path, 1, f"expected header {MODEL_HEADER!r}")
    try:
        d_part, p_part = lines[1].split()
        if not (d_part.startswith("d=") and p_part.startswith("p=")):
            raise ValueError
        d, p = int(d_part[2:]), int(p_part[2:])
    except (IndexError, ValueError):
        raise ParseError(path, 2, "expected 'd=<d> p=<p>'") from None
    if d < 1 or p < 1:
        raise ParseError(path, 2, "dimensions must be positive")
    body = [ln for ln in lines[2:]]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != p + 1:
        raise ParseError(path, len(lines), f"expected {p + 1} parameter rows, got {len(body)}")
    W = np.stack([_parse_floats(path, i + 3, body[i], d) for i in range(p)])
    b = _parse_floats(path, p + 3, body[p], p)
    return ProjectionModel(W, b)
