"""Validation Sum of each loss on the default synthetic dataset, plus the raw-feature baseline."""

from common import base_parser, dataset, fit, summary, val_sum

from relearn.datamodel import ProjectionModel

KINDS = ("trl", "itrl", "contrastive", "netrl")


def main():
    args = base_parser(__doc__).parse_args()
    sums = {k: [] for k in ("raw",) + KINDS}
    for seed in range(args.seeds):
        ds = dataset(seed)
        sums["raw"].append(val_sum(ProjectionModel.identity(ds.dim), ds))
        for kind in KINDS:
            model, _ = fit(ds, seed, kind, max_epochs=args.max_epochs, projection_dim=args.projection_dim)
            sums[kind].append(val_sum(model, ds))
        print(f"seed {seed}: " + "  ".join(f"{k}={v[-1]:.4f}" for k, v in sums.items()), flush=True)
    print("loss\tSum (mean +- sd)")
    for k, v in sums.items():
        print(f"{k}\t{summary(v)}")


if __name__ == "__main__":
    main()
