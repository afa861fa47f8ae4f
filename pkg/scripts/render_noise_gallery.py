"""Visual sanity sheet: one clean line next to each corruption category.

Writes a single PNG contact sheet; open it to eyeball that the injected
categories actually look like the failure modes they model.
"""
import argparse
from pathlib import Path

import numpy as np

from cerhv.ctc import Alphabet
from cerhv.images import write_image
from cerhv.manifest import INJECTABLE_CATEGORIES
from cerhv.synth import build_synthetic_manifest, inject_noise


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("runs/noise-gallery"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    alphabet = Alphabet.of("abcdefghij")
    manifest = build_synthetic_manifest(
        args.out / "data", count=30, alphabet=alphabet, seed=args.seed,
        min_len=5, max_len=7,
    )
    rates = {c: 0.1 for c in INJECTABLE_CATEGORIES}
    noisy = inject_noise(manifest, rates, seed=args.seed, splits=("train", "val", "test"))

    rows = []
    clean = next(e for e in noisy.entries if e.noise is None)
    picks = [("clean", clean)]
    for cat in INJECTABLE_CATEGORIES:
        picks.append((cat, next(e for e in noisy.entries if e.noise == cat)))

    width = 420
    for name, entry in picks:
        img = noisy.read_image(entry.id)
        canvas = np.full((max(img.shape[0], 48), width), 255, dtype=np.uint8)
        h, w = img.shape
        canvas[:h, : min(w, width)] = img[:, :width]
        rows.append(canvas)
        rows.append(np.full((6, width), 128, dtype=np.uint8))
        print(f"{name:18s} id={entry.id} label={entry.text!r}")

    sheet = np.vstack(rows[:-1])
    out = args.out / "gallery.png"
    write_image(out, sheet)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
