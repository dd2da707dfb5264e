"""Command-line entry point: ``relearn <subcommand> [flags]``.

Every subcommand accepts ``--config FILE`` with ``key=value`` lines. Keys are
flag names without the leading dashes. Values resolve as built-in defaults,
then the config file, then flags given on the command line.

Exit codes: 0 success, 1 usage error, 2 data or contract error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from .augment import AugmentConfig, augment_multilevel, estimate_noise_stats
from .datamodel import (ProjectionModel, RelearnError, format_video_features, load_dataset, load_frame_features,
                        load_model, load_splits, load_video_features, save_model)
from .evaluation import METRIC_NAMES, MetricsReport, add_feature_noise, candidate_ids, evaluate, known_neighbors
from .model import LOSS_KINDS, LossConfig
from .predict import build_candidate_index, rank_candidates
from .synth import SynthConfig, generate, gradient_check, write_synthetic
from .train import TrainConfig, train

log = logging.getLogger("relearn")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_bool.__name__ = "bool"


@dataclass(frozen=True)
class Opt:
    name: str
    type: Callable = str
    default: object = None
    help: str = ""
    choices: tuple | None = None

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


def _threads_default() -> int:
    raw = os.environ.get("RELEARN_THREADS", "1")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"RELEARN_THREADS must be an integer, got {raw!r}") from None


COMMON = [
    Opt("seed", int, 0, "random seed"),
    Opt("threads", int, None, "cap on BLAS threads (env RELEARN_THREADS, default 1)"),
]
DATA = [
    Opt("features", str, None, "video-level feature file"),
    Opt("frames", str, None, "frame-level feature file (used instead of --features when given)"),
    Opt("relevance", str, None, "relevance lists file"),
    Opt("splits", str, None, "split assignment file"),
]
AUG = [
    Opt("stride", int, 12, "skip-sampling stride"),
    Opt("mask-prob", float, 0.5, "per-component perturbation probability"),
    Opt("epsilon", float, 1.0, "perturbation scale"),
    Opt("frame-level", _bool, True, "enable frame-level skip sampling"),
    Opt("video-level", _bool, False, "enable video-level perturbation"),
]
RANKING = [
    Opt("model", str, None, "model file; omitted means raw features"),
    Opt("strategy", int, 1, "relevance strategy", (1, 2)),
    Opt("n", int, 0, "known relevant videos per candidate used by strategy 2"),
    Opt("eval-split", str, "val", "split whose videos act as seeds", ("val", "test")),
]

COMMANDS: dict[str, tuple[str, list[Opt]]] = {
    "synth": ("write a synthetic clustered dataset", COMMON + [
        Opt("out-dir", str, None, "output directory"),
        Opt("num-videos", int, 240, "number of videos"),
        Opt("num-clusters", int, 24, "number of clusters"),
        Opt("d", int, 64, "feature dimension"),
        Opt("min-frames", int, 20, "minimum frames per video"),
        Opt("max-frames", int, 40, "maximum frames per video"),
        Opt("noise", float, 3.0, "per-frame noise std"),
        Opt("distractor", _bool, True, "apply rotation and per-axis scaling"),
        Opt("train-frac", float, 0.6, "fraction of videos in train"),
        Opt("val-frac", float, 0.2, "fraction of videos in val"),
        Opt("signal-frac", float, 0.5, "fraction of dimensions carrying cluster identity"),
        Opt("centroid-scale", float, 1.0, "cluster centroid std"),
        Opt("spread", float, 0.8, "within-cluster std"),
        Opt("nuisance-scale", float, 2.0, "nuisance std"),
        Opt("offset-scale", float, 0.0, "std of the shared offset"),
    ]),
    "train": ("fit a projection model", COMMON + DATA + AUG + [
        Opt("out", str, None, "model output file"),
        Opt("log", str, None, "per-epoch log file (default: standard output)"),
        Opt("projection-dim", int, 512, "projection dimension p"),
        Opt("batch-size", int, 32, "triplets per batch"),
        Opt("lr", float, 0.001, "initial learning rate"),
        Opt("lr-halve-patience", int, 3, "epochs without val-loss decrease before halving lr"),
        Opt("early-stop-patience", int, 10, "epochs without val-Sum improvement before stopping"),
        Opt("max-epochs", int, 50, "maximum epochs"),
        Opt("loss", str, "netrl", "loss function", LOSS_KINDS),
        Opt("m1", float, 0.2, "triplet margin"),
        Opt("m2", float, 0.05, "negative similarity cap"),
        Opt("alpha", float, 1.0, "weight of the negative term"),
        Opt("val-every", int, 0, "also record val Sum every this many iterations (0 = off)"),
    ]),
    "augment": ("write augmented instances in video-level format", COMMON + AUG + [
        Opt("features", str, None, "video-level feature file"),
        Opt("frames", str, None, "frame-level feature file"),
        Opt("splits", str, None, "split file; noise statistics use train videos when given"),
        Opt("out", str, None, "output file (default: standard output)"),
    ]),
    "predict": ("write top-k recommendations per seed", COMMON + DATA + RANKING + [
        Opt("k", int, 300, "list length"),
        Opt("out", str, None, "output file (default: standard output)"),
    ]),
    "evaluate": ("report hit@k, recall@k and Sum", COMMON + DATA + RANKING + [
        Opt("noise", float, 0.0, "coefficient of N(0,1) noise added to features before scoring"),
        Opt("out", str, None, "report file (default: standard output)"),
        Opt("per-seed", str, None, "optional per-seed CSV file"),
    ]),
    "gradcheck": ("compare analytic and finite-difference gradients", COMMON + [
        Opt("trials", int, 100, "number of random draws"),
        Opt("d", int, 4, "input dimension"),
        Opt("p", int, 3, "projection dimension"),
    ]),
}

REQUIRED = {
    "synth": ("out_dir",),
    "train": ("relevance", "splits", "out"),
    "predict": ("relevance", "splits"),
    "evaluate": ("relevance", "splits"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relearn", description="Supervised feature re-learning for video relevance.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, (help_text, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=argparse.SUPPRESS, help="key=value config file")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                       help="log progress to standard error")
        for o in opts:
            shown = "none" if o.default is None else o.default
            p.add_argument("--" + o.name, dest=o.dest, type=o.type, choices=o.choices,
                           default=argparse.SUPPRESS, help=f"{o.help} (default: {shown})")
    return parser


def read_config(path, opts: list[Opt]) -> dict:
    by_dest = {o.dest: o for o in opts}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        opt = by_dest.get(key.replace("-", "_"))
        if opt is None:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[opt.dest] = opt.type(value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
        if opt.choices is not None and out[opt.dest] not in opt.choices:
            raise UsageError(f"{path}:{lineno}: {key} must be one of {opt.choices}")
    return out


def resolve(command: str, ns: argparse.Namespace) -> argparse.Namespace:
    """Merge defaults, config file and explicit flags, in that order."""
    opts = COMMANDS[command][1]
    values = {o.dest: o.default for o in opts}
    given = vars(ns)
    if "config" in given:
        values.update(read_config(given["config"], opts))
    values.update({k: v for k, v in given.items() if k in values})
    if values.get("threads") is None:
        values["threads"] = _threads_default()
    missing = [k for k in REQUIRED.get(command, ()) if values.get(k) is None]
    if missing:
        raise UsageError(f"relearn {command}: missing required option(s): "
                         + ", ".join("--" + m.replace("_", "-") for m in missing))
    values["verbose"] = given.get("verbose", False)
    return argparse.Namespace(**values)


def _write_text(path, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load(a):
    if a.features is None and a.frames is None:
        raise UsageError("one of --features or --frames is required")
    return load_dataset(a.relevance, a.splits, features=a.features, frames=a.frames)


def _augment_config(a) -> AugmentConfig:
    return AugmentConfig(stride=a.stride, mask_prob=a.mask_prob, epsilon=a.epsilon,
                         enable_frame_level=a.frame_level, enable_video_level=a.video_level)


def cmd_synth(a) -> None:
    cfg = SynthConfig(num_videos=a.num_videos, num_clusters=a.num_clusters, d=a.d, min_frames=a.min_frames,
                      max_frames=a.max_frames, noise=a.noise, distractor=a.distractor, train_frac=a.train_frac,
                      val_frac=a.val_frac, seed=a.seed, signal_frac=a.signal_frac,
                      centroid_scale=a.centroid_scale, spread=a.spread, nuisance_scale=a.nuisance_scale,
                      offset_scale=a.offset_scale)
    for path in write_synthetic(generate(cfg), a.out_dir).values():
        print(path)


def cmd_train(a) -> None:
    dataset = _load(a)
    cfg = TrainConfig(projection_dim=a.projection_dim, batch_size=a.batch_size, initial_lr=a.lr,
                      lr_halve_patience=a.lr_halve_patience, early_stop_patience=a.early_stop_patience,
                      max_epochs=a.max_epochs, loss=LossConfig(kind=a.loss, m1=a.m1, m2=a.m2, alpha=a.alpha),
                      augment=_augment_config(a), seed=a.seed, val_every=a.val_every)
    if a.log is None:
        model, _ = train(cfg, dataset, log_to=sys.stdout)
    else:
        with open(a.log, "w", encoding="utf-8") as fh:
            model, _ = train(cfg, dataset, log_to=fh)
    save_model(model, a.out)


def cmd_augment(a) -> None:
    if a.frames is not None:
        frames = load_frame_features(a.frames)
    elif a.features is not None:
        frames = {v: x[None, :] for v, x in load_video_features(a.features).items()}
    else:
        raise UsageError("one of --features or --frames is required")
    cfg = _augment_config(a)
    pooled = {v: f.mean(axis=0) for v, f in frames.items()}
    stats = None
    if cfg.enable_video_level:
        ids = sorted(pooled)
        if a.splits is not None:
            split = load_splits(a.splits)
            ids = [v for v in ids if split.get(v) == "train"]
            if not ids:
                raise RelearnError(f"{a.splits}: no train videos to estimate noise statistics from")
        stats = estimate_noise_stats(pooled[v] for v in ids)
    rng = np.random.default_rng(a.seed)
    out = {}
    for v in sorted(frames):
        for k, x in enumerate(augment_multilevel(frames[v], stats, cfg, rng)):
            out[f"{v}#{k}"] = x
    _write_text(a.out, format_video_features(out))


def _model_or_identity(a, dim: int) -> ProjectionModel:
    if a.model is None:
        return ProjectionModel.identity(dim)
    model = load_model(a.model)
    try:
        model.check_dim(dim)
    except RelearnError as exc:
        raise RelearnError(f"{a.model}: {exc}") from None
    return model


def cmd_predict(a) -> None:
    dataset = _load(a)
    model = _model_or_identity(a, dataset.dim)
    index = build_candidate_index(model, dataset.features, candidate_ids(dataset, a.eval_split))
    neighbors = known_neighbors(dataset) if a.strategy == 2 else None
    lines = []
    for seed in dataset.relevance.ids_in(a.eval_split):
        ranked = rank_candidates(index, seed, a.k, seed_feature=dataset.features[seed], strategy=a.strategy,
                                 neighbors=neighbors, n=a.n)
        lines.append(f"{seed}\t{','.join(ranked.ids)}\n")
    _write_text(a.out, "".join(lines))


def cmd_evaluate(a) -> None:
    dataset = _load(a)
    model = _model_or_identity(a, dataset.dim)
    features = None
    if a.noise:
        features = add_feature_noise(dataset.features, a.noise, np.random.default_rng(a.seed))
    report: MetricsReport = evaluate(model, dataset, a.eval_split, strategy=a.strategy, n=a.n,
                                     features=features, per_seed=a.per_seed is not None)
    _write_text(a.out, report.header() + "\n" + report.row() + "\n")
    if a.per_seed is not None:
        rows = ["seed," + ",".join(METRIC_NAMES)]
        for seed in sorted(report.per_seed):
            m = report.per_seed[seed]
            rows.append(seed + "," + ",".join("%.6f" % m[name] for name in METRIC_NAMES))
        Path(a.per_seed).write_text("\n".join(rows) + "\n", encoding="utf-8")


def cmd_gradcheck(a) -> None:
    if a.trials < 1 or a.d < 1 or a.p < 1:
        raise UsageError("--trials, --d and --p must be positive")
    errors = gradient_check(a.seed, trials=a.trials, d=a.d, p=a.p)
    for kind in sorted({k for k, _ in errors}):
        worst = max(e for k, e in errors if k == kind)
        print(f"{kind}\t{worst:.3e}", file=sys.stderr)
    print(f"max_relative_error\t{max(e for _, e in errors):.6e}")


HANDLERS = {"synth": cmd_synth, "train": cmd_train, "augment": cmd_augment, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "gradcheck": cmd_gradcheck}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        args = resolve(ns.command, ns)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"relearn: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit as exc:
        # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    if args.verbose:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(name)s: %(message)s")
    if args.threads < 1:
        print("relearn: error: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        with threadpool_limits(limits=args.threads):
            HANDLERS[ns.command](args)
    except UsageError as exc:
        print(f"relearn {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RelearnError, OSError) as exc:
        print(f"relearn {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
