"""Synthetic line rendering and label-noise injection.

Real handwriting datasets are too big for desk-scale validation, so lines are
drawn from pseudo-glyphs: per-codepoint stroke doodles whose shape is a pure
function of (bank seed, codepoint). A bank guarantees its glyphs are mutually
dissimilar, which is what makes script-mismatch corruption (same text, alien
glyph shapes) behave like a different writing system.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np

from .ctc import Alphabet
from .manifest import INJECTABLE_CATEGORIES, LineSample, Manifest
from .metrics import Transcript

GLYPH_CORR_LIMIT = 0.8  # pairwise normalized correlation bound inside a bank
_GLYPH_ATTEMPTS = 100


def _stable_seed(*parts) -> int:
    """64-bit seed from a blake2b digest; stable across platforms and runs."""
    h = hashlib.blake2b("|".join(str(p) for p in parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "big")


@dataclass(frozen=True)
class RenderParams:
    """Geometry and texture knobs for the line renderer."""

    glyph_size: int = 24
    height: int = 32
    margin: int = 3
    vertical_jitter: int = 2
    spacing_min: int = 1
    spacing_max: int = 3
    background: int = 245
    noise_sigma: float = 2.0
    rtl: bool = False

    def __post_init__(self):
        if self.glyph_size + 2 * self.vertical_jitter > self.height:
            raise ValueError("glyphs with jitter must fit inside the line height")
        if self.spacing_min > self.spacing_max:
            raise ValueError("spacing_min > spacing_max")


def _draw_glyph(rng: np.random.Generator, size: int) -> np.ndarray:
    """One pseudo-glyph: a few blurred random-walk strokes, ink dark on white."""
    ink = np.zeros((size, size), dtype=np.float32)
    for _ in range(int(rng.integers(2, 5))):
        x = float(rng.uniform(3, size - 3))
        y = float(rng.uniform(3, size - 3))
        angle = float(rng.uniform(0, 2 * np.pi))
        for _ in range(int(rng.integers(8, 20))):
            angle += float(rng.normal(0.0, 0.7))
            x = float(np.clip(x + 1.6 * np.cos(angle), 1, size - 2))
            y = float(np.clip(y + 1.6 * np.sin(angle), 1, size - 2))
            cv2.circle(ink, (int(round(x)), int(round(y))), 1, 1.0, -1)
    ink = cv2.GaussianBlur(ink, (3, 3), 0.8)
    peak = float(ink.max())
    if peak <= 0:
        return _draw_glyph(rng, size)
    ink = ink / peak
    return (255.0 * (1.0 - ink)).astype(np.uint8)


def _normalized_correlation(a: np.ndarray, b: np.ndarray) -> float:
    fa = a.astype(np.float64).ravel()
    fb = b.astype(np.float64).ravel()
    fa -= fa.mean()
    fb -= fb.mean()
    denom = np.linalg.norm(fa) * np.linalg.norm(fb)
    if denom == 0:
        return 1.0  # constant images count as duplicates
    return float(np.dot(fa, fb) / denom)


class GlyphBank:
    """Deterministic codepoint -> bitmap table with pairwise dissimilarity.

    Candidate glyphs whose correlation with any accepted glyph reaches
    GLYPH_CORR_LIMIT are rejected and redrawn from the next derived seed, so
    the published bound holds by construction.
    """

    def __init__(self, alphabet: Alphabet, bank_seed: int, glyph_size: int = 24):
        self.alphabet = alphabet
        self.bank_seed = bank_seed
        self.glyph_size = glyph_size
        self.glyphs: dict[str, np.ndarray] = {}
        accepted: list[np.ndarray] = []
        for symbol in alphabet.symbols:
            for attempt in range(_GLYPH_ATTEMPTS):
                rng = np.random.default_rng(
                    _stable_seed("glyph", bank_seed, glyph_size, symbol, attempt)
                )
                cand = _draw_glyph(rng, glyph_size)
                if all(
                    _normalized_correlation(cand, g) < GLYPH_CORR_LIMIT
                    for g in accepted
                ):
                    break
            else:
                raise RuntimeError(f"no dissimilar glyph found for {symbol!r}")
            accepted.append(cand)
            self.glyphs[symbol] = cand

    def glyph(self, symbol: str) -> np.ndarray:
        if symbol not in self.glyphs:
            raise ValueError(f"codepoint {symbol!r} not in glyph bank")
        return self.glyphs[symbol]


_BANK_CACHE: dict[tuple, GlyphBank] = {}


def get_glyph_bank(alphabet: Alphabet, bank_seed: int, glyph_size: int = 24) -> GlyphBank:
    key = (alphabet.symbols, bank_seed, glyph_size)
    if key not in _BANK_CACHE:
        _BANK_CACHE[key] = GlyphBank(alphabet, bank_seed, glyph_size)
    return _BANK_CACHE[key]


def render_synthetic_line(
    text: Transcript | str,
    glyph_seed: int,
    style_seed: int,
    *,
    alphabet: Alphabet,
    params: RenderParams = RenderParams(),
) -> np.ndarray:
    """Compose a line image from pseudo-glyphs. Pure in (text, seeds, params)."""
    raw = text.text if isinstance(text, Transcript) else Transcript.of(text).text
    bank = get_glyph_bank(alphabet, glyph_seed, params.glyph_size)
    style = np.random.default_rng(_stable_seed("style", style_seed, raw))

    g = params.glyph_size
    placements = []  # (x, y, glyph)
    x = params.margin
    last_end = params.margin
    for ch in raw:
        glyph = bank.glyph(ch)  # raises on out-of-alphabet codepoints
        y = (params.height - g) // 2 + int(
            style.integers(-params.vertical_jitter, params.vertical_jitter + 1)
        )
        placements.append((x, y, glyph))
        last_end = x + g
        x = last_end + int(style.integers(params.spacing_min, params.spacing_max + 1))
    width = max(last_end + params.margin, 2 * params.margin, 4)

    canvas = np.full((params.height, width), params.background, dtype=np.uint8)
    for px, py, glyph in placements:
        if params.rtl:
            px = width - px - g  # first codepoint lands rightmost
        region = canvas[py: py + g, px: px + g]
        np.minimum(region, glyph, out=region)
    if params.noise_sigma > 0:
        noise = style.normal(0.0, params.noise_sigma, size=canvas.shape)
        canvas = np.clip(canvas.astype(np.float64) + noise, 0, 255).astype(np.uint8)
    return canvas


def random_text(rng: np.random.Generator, alphabet: Alphabet, min_len: int, max_len: int) -> str:
    n = int(rng.integers(min_len, max_len + 1))
    idx = rng.integers(0, alphabet.size, size=n)
    return "".join(alphabet.symbols[i] for i in idx)


def build_synthetic_manifest(
    out_dir,
    *,
    count: int,
    alphabet: Alphabet,
    seed: int,
    min_len: int = 3,
    max_len: int = 8,
    split_fracs: tuple[float, float, float] = (0.8, 0.1, 0.1),
    params: RenderParams = RenderParams(),
    lines_per_page: int | None = None,
) -> Manifest:
    """Render a full synthetic dataset under out_dir and return its manifest.

    One glyph bank serves the whole dataset; per-line style seeds vary the
    jitter. Splits are assigned by seeded shuffle with rounded val/test
    counts. Images land in out_dir/images/, one PNG per line.
    """
    out_dir = Path(out_dir)
    if count < 3:
        raise ValueError("need at least 3 samples to populate three splits")
    rng = np.random.default_rng(_stable_seed("dataset", seed))
    glyph_seed = _stable_seed("bank", seed)

    n_val = int(np.floor(count * split_fracs[1] + 0.5))
    n_test = int(np.floor(count * split_fracs[2] + 0.5))
    order = list(rng.permutation(count))
    split_of = {}
    for pos, idx in enumerate(order):
        if pos < n_val:
            split_of[idx] = "val"
        elif pos < n_val + n_test:
            split_of[idx] = "test"
        else:
            split_of[idx] = "train"

    manifest = Manifest(alphabet=alphabet, base_dir=out_dir)
    for i in range(count):
        text = random_text(rng, alphabet, min_len, max_len)
        image = render_synthetic_line(
            Transcript.of(text),
            glyph_seed,
            _stable_seed("line-style", seed, i),
            alphabet=alphabet,
            params=params,
        )
        sample_id = f"syn-{i:05d}"
        rel = f"images/{sample_id}.png"
        manifest.write_image_at(rel, image)
        page = None
        if lines_per_page:
            page = f"page-{i // lines_per_page:04d}"
        manifest.entries.append(
            LineSample(id=sample_id, image=rel, text=text, split=split_of[i], page=page)
        )
    manifest.validate()
    return manifest


# ---------------------------------------------------------------------------
# noise injection


def _corrupt_transcription(rng, text: str, alphabet: Alphabet) -> str:
    """Wrong-label corruption: heavy codepoint replacement or a full shuffle."""
    chars = list(text)
    if len(chars) >= 2 and rng.random() < 0.5:
        for _ in range(10):
            perm = list(rng.permutation(len(chars)))
            shuffled = [chars[i] for i in perm]
            if shuffled != chars:
                return "".join(shuffled)
    frac = float(rng.uniform(0.5, 1.0))
    k = max(1, int(round(frac * len(chars))))
    positions = rng.choice(len(chars), size=min(k, len(chars)), replace=False)
    for pos in positions:
        options = [s for s in alphabet.symbols if s != chars[pos]]
        chars[pos] = options[int(rng.integers(0, len(options)))] if options else chars[pos]
    return "".join(chars)


def _match_width(img: np.ndarray, width: int) -> np.ndarray:
    if img.shape[1] == width:
        return img
    if img.shape[1] > width:
        return img[:, :width]
    fill = int(np.median(img))
    out = np.full((img.shape[0], width), fill, dtype=img.dtype)
    out[:, : img.shape[1]] = img
    return out


def _corrupt_segmentation(rng, img: np.ndarray, other: np.ndarray | None) -> np.ndarray:
    if other is not None and rng.random() < 0.5:
        return np.vstack([img, _match_width(other, img.shape[1])])
    keep = max(1, int(round(img.shape[1] * 0.6)))  # drop the right 40%
    return img[:, :keep].copy()


def _irrelevant_blob(rng, shape: tuple[int, int]) -> np.ndarray:
    """Structured non-text content: bars, checkers, or a gradient blob."""
    h, w = shape
    kind = int(rng.integers(0, 3))
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == 0:
        period = int(rng.integers(4, 10))
        img = 255.0 * ((xx // period) % 2)
    elif kind == 1:
        period = int(rng.integers(4, 10))
        img = 255.0 * (((xx // period) + (yy // period)) % 2)
    else:
        cx, cy = rng.uniform(0.2, 0.8) * w, rng.uniform(0.2, 0.8) * h
        r2 = ((xx - cx) ** 2 + (yy - cy) ** 2) / (0.1 * (h * h + w * w))
        img = 255.0 * np.exp(-r2)
    img = img + rng.normal(0, 8, size=shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def rotate180(img: np.ndarray) -> np.ndarray:
    """Exact 180-degree rotation; applying it twice is the identity."""
    return np.ascontiguousarray(np.rot90(img, 2))


def plan_injection(n: int, rates: dict[str, float]) -> dict[str, int]:
    """Exact per-category corruption counts: round(rate * n), half away from zero."""
    counts = {}
    for cat, rate in rates.items():
        if cat not in INJECTABLE_CATEGORIES:
            raise ValueError(f"cannot inject category {cat!r}")
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"rate for {cat} outside [0,1]: {rate}")
        counts[cat] = int(np.floor(rate * n + 0.5))
    if sum(counts.values()) > n:
        raise ValueError("requested noise rates exceed the manifest size")
    return {c: k for c, k in counts.items() if k > 0}


def inject_noise(
    manifest: Manifest,
    rates: dict[str, float],
    seed: int,
    *,
    render_alphabet: Alphabet | None = None,
    params: RenderParams = RenderParams(),
    splits: tuple[str, ...] = ("train",),
) -> Manifest:
    """Corrupt a seeded subset of samples, recording the truth per sample.

    Selection: eligible sample ids are shuffled once and assigned to
    categories in taxonomy order, so counts match plan_injection exactly.
    Corrupted images are written next to the originals with a ``_noisy``
    suffix; source files stay untouched. Only label corruption leaves the
    image file alone.
    """
    eligible = [e for e in manifest.entries if e.split in splits]
    counts = plan_injection(len(eligible), rates)
    rng = np.random.default_rng(_stable_seed("inject", seed))
    order = list(rng.permutation(len(eligible)))

    assignment: dict[str, str] = {}
    cursor = 0
    for cat in INJECTABLE_CATEGORIES:
        for _ in range(counts.get(cat, 0)):
            assignment[eligible[order[cursor]].id] = cat
            cursor += 1

    alphabet = manifest.alphabet
    mismatch_seed = _stable_seed("mismatch-bank", seed)
    mismatch_alphabet = render_alphabet or alphabet

    new_entries = []
    for entry in manifest.entries:
        cat = assignment.get(entry.id)
        if cat is None:
            new_entries.append(entry)
            continue
        ent_rng = np.random.default_rng(_stable_seed("corrupt", seed, entry.id))
        new_entry = replace(entry, noise=cat)
        if cat == "transcription":
            new_entry = replace(
                new_entry, text=_corrupt_transcription(ent_rng, entry.text, alphabet)
            )
            new_entries.append(new_entry)
            continue

        img = manifest.read_image(entry.id)
        if cat == "segmentation":
            other_ids = [e.id for e in eligible if e.id != entry.id]
            other = None
            if other_ids:
                other = manifest.read_image(other_ids[int(ent_rng.integers(0, len(other_ids)))])
            out = _corrupt_segmentation(ent_rng, img, other)
        elif cat == "orientation":
            out = rotate180(img)
        elif cat == "script_mismatch":
            # foreign-script content: alien glyphs AND unrelated text, so the
            # image cannot be reconciled with the label even by memorization
            alien = random_text(
                ent_rng, mismatch_alphabet, min_len=max(1, len(entry.text)), max_len=max(1, len(entry.text))
            )
            out = render_synthetic_line(
                alien,
                mismatch_seed,
                int(ent_rng.integers(0, 2**31)),
                alphabet=mismatch_alphabet,
                params=params,
            )
        else:  # irrelevant
            out = _irrelevant_blob(ent_rng, img.shape)

        noisy_rel = entry.image.rsplit(".", 1)[0] + "_noisy.png"
        manifest.write_image_at(noisy_rel, out)
        new_entries.append(replace(new_entry, image=noisy_rel))

    return manifest.with_entries(new_entries)
