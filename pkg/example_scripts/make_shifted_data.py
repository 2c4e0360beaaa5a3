#!/usr/bin/env python3
"""
Shifted Data Generator
Writes train.csv, test.csv and eval.csv for a synthetic source at a given θ*₁
"""
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

from src.data import save_dataset  # noqa: E402
from src.generators import synth_generator  # noqa: E402


def main(out_dir, kind, theta, per_class=10, test_total=50, seed=0):
    """Draw one training/test pair and save it under out_dir"""
    generator = synth_generator(kind)
    if generator.c != 2:
        print(f"{kind} has {generator.c} classes; this script writes binary data only")
        return 1

    os.makedirs(out_dir, exist_ok=True)
    train, test = generator.draw_trial((per_class, per_class), test_total,
                                       (theta, 1.0 - theta), seed)
    save_dataset(train, os.path.join(out_dir, "train.csv"))
    save_dataset(test.unlabeled(), os.path.join(out_dir, "test.csv"))
    save_dataset(test, os.path.join(out_dir, "eval.csv"))

    print(f"Source: {kind}, theta*: {theta}, seed: {seed}")
    print(f"Training: {train.n} points, test: {test.n} points")
    print(f"Files written to: {out_dir}")
    return 0


if __name__ == "__main__":
    if len(sys.argv) < 4:
        print("Usage: make_shifted_data.py <out_dir> <gauss-1d|gauss-multid> <theta> [seed]")
        sys.exit(1)

    seed = int(sys.argv[4]) if len(sys.argv) > 4 else 0
    sys.exit(main(sys.argv[1], sys.argv[2], float(sys.argv[3]), seed=seed))
