"""Validation Sum of NETRL and TRL models when Gaussian noise is added to the features."""

import numpy as np
from common import base_parser, dataset, fit, val_sum

from relearn.evaluation import add_feature_noise


def main():
    p = base_parser(__doc__)
    p.add_argument("--levels", type=float, nargs="+", default=[0.0, 0.25, 0.5, 1.0])
    p.add_argument("--draws", type=int, default=40, help="noise draws per seed and level")
    args = p.parse_args()
    curves = {k: {c: [] for c in args.levels} for k in ("netrl", "trl")}
    for seed in range(args.seeds):
        ds = dataset(seed)
        for kind, curve in curves.items():
            model, _ = fit(ds, seed, kind, max_epochs=args.max_epochs, projection_dim=args.projection_dim)
            for c in args.levels:
                if c == 0:
                    curve[c].append(val_sum(model, ds))
                    continue
                draws = [val_sum(model, ds, features=add_feature_noise(ds.features, c, np.random.default_rng([seed, j])))
                         for j in range(args.draws)]
                curve[c].append(float(np.mean(draws)))
        print(f"seed {seed} done", flush=True)
    print("loss\t" + "\t".join(f"noise={c}" for c in args.levels) + "\trelative drop per level")
    for kind, curve in curves.items():
        means = [float(np.mean(curve[c])) for c in args.levels]
        drops = [1 - m / means[0] for m in means]
        print(kind + "\t" + "\t".join(f"{m:.4f}" for m in means) + "\t" + " ".join(f"{d:.4f}" for d in drops))


if __name__ == "__main__":
    main()
