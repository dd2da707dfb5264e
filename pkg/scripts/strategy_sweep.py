"""Strategy 1 against strategy 2 with a growing number n of known relevant videos per candidate."""

from common import base_parser, dataset, fit, summary, val_sum


def main():
    p = base_parser(__doc__)
    p.add_argument("--ns", type=int, nargs="+", default=[0, 1, 3, 5, 10])
    args = p.parse_args()
    rows = {"strategy 1": []} | {f"strategy 2, n={n}": [] for n in args.ns}
    for seed in range(args.seeds):
        ds = dataset(seed)
        model, _ = fit(ds, seed, max_epochs=args.max_epochs, projection_dim=args.projection_dim)
        rows["strategy 1"].append(val_sum(model, ds))
        for n in args.ns:
            rows[f"strategy 2, n={n}"].append(val_sum(model, ds, strategy=2, n=n))
    print("setting\tSum (mean +- sd)")
    for name, v in rows.items():
        print(f"{name}\t{summary(v)}")


if __name__ == "__main__":
    main()
