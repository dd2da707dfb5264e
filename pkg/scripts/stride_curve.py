"""NETRL validation Sum as a function of the frame-level skip-sampling stride."""

from common import base_parser, dataset, fit, summary, val_sum


def main():
    p = base_parser(__doc__)
    p.add_argument("--strides", type=int, nargs="+", default=[1, 2, 4, 8, 12])
    args = p.parse_args()
    rows = {"none": []} | {s: [] for s in args.strides}
    for seed in range(args.seeds):
        ds = dataset(seed)
        for stride in rows:
            model, _ = fit(ds, seed, stride=None if stride == "none" else stride, max_epochs=args.max_epochs,
                           projection_dim=args.projection_dim)
            rows[stride].append(val_sum(model, ds))
        print(f"seed {seed} done", flush=True)
    print("stride\tSum (mean +- sd)")
    for stride, v in rows.items():
        print(f"{stride}\t{summary(v)}")


if __name__ == "__main__":
    main()
