"""Validation Sum against training iterations for NETRL and TRL."""

from common import base_parser, dataset, fit


def main():
    p = base_parser(__doc__)
    p.add_argument("--every", type=int, default=100, help="iterations between validation checkpoints")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    ds = dataset(args.seed)
    traces = {}
    for kind in ("netrl", "trl"):
        _, history = fit(ds, args.seed, kind, max_epochs=args.max_epochs, projection_dim=args.projection_dim,
                         val_every=args.every)
        traces[kind] = dict(history.checkpoints)
    print("iteration\tnetrl\ttrl")
    for it in sorted(set(traces["netrl"]) | set(traces["trl"])):
        cells = [f"{traces[k][it]:.4f}" if it in traces[k] else "" for k in ("netrl", "trl")]
        print(f"{it}\t" + "\t".join(cells))


if __name__ == "__main__":
    main()
