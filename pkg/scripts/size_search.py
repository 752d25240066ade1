"""Greedy search for the codebook size with the lowest mean reconstruction error."""

import argparse

from sparsehar.codebook import LearnConfig, default_batches, search_codebook_size
from sparsehar.pipeline import default_fixture, frame_stream, synth_generate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ladder", type=int, nargs="+", default=[64, 128, 256, 384, 512])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    (stream,) = synth_generate(default_fixture(users=1), seed=args.seed)
    frames = frame_stream(stream).values
    cfg = LearnConfig(alpha=args.alpha, batches=default_batches(len(frames), max(args.ladder)),
                      max_epochs=args.epochs, seed=args.seed)
    best, errors = search_codebook_size(frames, args.ladder, config=cfg)
    for size in sorted(errors):
        print(f"{size:>5}  mean RMSE {errors[size]:.5f}{'  <- best' if size == best else ''}")


if __name__ == "__main__":
    main()
