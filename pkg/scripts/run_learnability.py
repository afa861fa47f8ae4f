"""Desk-scale learnability check: clean synthetic data, three seeds.

Each run trains the small recognizer preset on 500 rendered lines over a
10-symbol alphabet and reports held-out CER at the early-stopped epoch.
"""
import argparse
import json
from pathlib import Path

from cerhv.lab import run_learnability, write_lab_report


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", type=Path, default=Path("runs/learnability"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--count", type=int, default=500)
    args = ap.parse_args()

    records = []
    for seed in args.seeds:
        res = run_learnability(args.workdir / f"seed{seed}", seed=seed, count=args.count)
        rec = res.to_record()
        records.append(rec)
        print(json.dumps(rec))

    worst = max(r["test_cer"] for r in records)
    print(f"worst test CER over {len(records)} seeds: {worst:.4f}")
    write_lab_report(args.workdir / "learnability.jsonl", records)


if __name__ == "__main__":
    main()
