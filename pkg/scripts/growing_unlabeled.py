"""F1M as the unlabeled pool grows, with the labeled and test users held fixed."""

import argparse
import json

import numpy as np

from sparsehar.pipeline import ProtocolConfig, default_fixture, run_protocol, synth_generate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--budgets", type=float, nargs="+", default=[0.0, 0.1, 0.25, 0.5, 1.0])
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--json")
    args = ap.parse_args()

    table = np.zeros((len(args.seeds), len(args.budgets)))
    for i, seed in enumerate(args.seeds):
        streams = synth_generate(default_fixture(), seed=seed)
        curve = run_protocol("growing_unlabeled", streams, ProtocolConfig(codebook_size=args.size, seed=seed),
                             budgets=args.budgets)
        table[i] = [rep.f1m for _, rep in curve]
        print(f"seed {seed}  " + "  ".join(f"{b:g}:{v:5.1f}" for b, v in zip(args.budgets, table[i])), flush=True)
    print("mean    " + "  ".join(f"{b:g}:{v:5.1f}" for b, v in zip(args.budgets, table.mean(axis=0))))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"budgets": args.budgets, "seeds": args.seeds, "f1m": table.round(2).tolist()}, fh, indent=2)


if __name__ == "__main__":
    main()
