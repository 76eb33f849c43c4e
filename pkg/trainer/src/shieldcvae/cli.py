"""Command line entry point: train a residual model from a rollout log."""

import argparse
import os
import sys

from .dataset import DatasetError, extract_residuals, load_rollout_csv
from .export import ExportError, export_weights, write_probe
from .model import TrainConfig, TrainingError, train


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shieldcvae",
        description="train a generative tracking-residual model and export "
                    "shield-cvae-1 weights")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", help="fit a model to a rollout log")
    p.add_argument("--log", required=True,
                   help="rollout CSV (timestamp,px,py,theta,vx,vy,omega)")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--context-len", type=int, default=4)
    p.add_argument("--latent-dim", type=int, default=4)
    p.add_argument("--hidden", default="64,64",
                   help="comma-separated hidden layer widths")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--val-split", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probe-cases", type=int, default=10)
    return parser


def cmd_train(args) -> int:
    try:
        hidden = tuple(int(v) for v in args.hidden.split(",") if v.strip())
    except ValueError:
        print("train: --hidden must be comma-separated integers",
              file=sys.stderr)
        return 2
    try:
        config = TrainConfig(context_len=args.context_len,
                             latent_dim=args.latent_dim, hidden=hidden,
                             epochs=args.epochs, lr=args.lr,
                             batch_size=args.batch_size, beta=args.beta,
                             val_split=args.val_split, seed=args.seed)
    except ValueError as err:
        print("train: %s" % err, file=sys.stderr)
        return 2

    dataset = load_rollout_csv(args.log)
    pairs = extract_residuals(dataset, config.context_len)
    print("loaded %d sequences, %d samples, %d training pairs"
          % (len(dataset.sequences), dataset.samples, len(pairs)))

    decoder, report = train(pairs, config)

    os.makedirs(args.out_dir, exist_ok=True)
    weights_path = os.path.join(args.out_dir, "weights.json")
    probe_path = os.path.join(args.out_dir, "probe.json")
    report_path = os.path.join(args.out_dir, "report.txt")
    export_weights(decoder, weights_path)
    write_probe(decoder, probe_path, n=args.probe_cases, seed=config.seed)
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report)

    print(report, end="")
    print("wrote %s, %s, %s" % (weights_path, probe_path, report_path))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return cmd_train(args)
    except DatasetError as err:
        print("shieldcvae: %s" % err, file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print("shieldcvae: %s" % err, file=sys.stderr)
        return 2
    except (TrainingError, ExportError, OSError) as err:
        print("shieldcvae: %s" % err, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
