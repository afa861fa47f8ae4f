"""Line-delimited JSON dataset manifests.

A manifest file is UTF-8 JSONL: one header object carrying the alphabet and
aggregate stats, then one record per line sample. Image paths are stored
relative to the manifest's directory so dataset trees stay relocatable.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ctc import Alphabet
from .images import png_size, read_image, write_image
from .metrics import Transcript

SPLITS = ("train", "val", "test")

# Error taxonomy for flagged samples. The first five are injectable content
# corruptions; valid_but_hard exists only as a human verdict.
ERROR_CATEGORIES = (
    "transcription",
    "segmentation",
    "orientation",
    "script_mismatch",
    "irrelevant",
    "valid_but_hard",
)
INJECTABLE_CATEGORIES = ERROR_CATEGORIES[:5]


@dataclass
class LineSample:
    """One text-line image with its observed transcript."""

    id: str
    image: str  # path relative to the manifest directory
    text: str
    split: str
    page: str | None = None
    noise: str | None = None  # injected-error category, synthetic data only

    def to_record(self) -> dict:
        rec = {"id": self.id, "image": self.image, "text": self.text, "split": self.split}
        if self.page is not None:
            rec["page"] = self.page
        if self.noise is not None:
            rec["noise"] = {"category": self.noise}
        return rec

    @staticmethod
    def from_record(rec: dict) -> "LineSample":
        noise = rec.get("noise")
        return LineSample(
            id=rec["id"],
            image=rec["image"],
            text=rec["text"],
            split=rec["split"],
            page=rec.get("page"),
            noise=noise["category"] if noise else None,
        )


@dataclass
class Manifest:
    alphabet: Alphabet
    entries: list[LineSample] = field(default_factory=list)
    base_dir: Path = Path(".")

    def __post_init__(self):
        self.base_dir = Path(self.base_dir)

    def validate(self) -> None:
        ids = set()
        for e in self.entries:
            if e.id in ids:
                raise ValueError(f"duplicate sample id: {e.id}")
            ids.add(e.id)
            if e.split not in SPLITS:
                raise ValueError(f"sample {e.id}: unknown split {e.split!r}")
            for ch in e.text:
                if ch not in self.alphabet:
                    raise ValueError(
                        f"sample {e.id}: codepoint {ch!r} outside alphabet"
                    )
            if e.noise is not None and e.noise not in ERROR_CATEGORIES:
                raise ValueError(f"sample {e.id}: unknown noise category {e.noise!r}")

    def split_entries(self, split: str) -> list[LineSample]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [e for e in self.entries if e.split == split]

    def by_id(self, sample_id: str) -> LineSample:
        for e in self.entries:
            if e.id == sample_id:
                return e
        raise KeyError(sample_id)

    def image_path(self, sample: LineSample) -> Path:
        return self.base_dir / sample.image

    def read_image(self, sample_id: str) -> np.ndarray:
        return read_image(self.image_path(self.by_id(sample_id)))

    def write_image_at(self, relative: str, image: np.ndarray) -> Path:
        target = self.base_dir / relative
        write_image(target, image)
        return target

    def stats(self) -> dict:
        """Aggregate stats over entries; image dims read from PNG headers."""
        widths, heights = [], []
        for e in self.entries:
            try:
                w, h = png_size(self.image_path(e))
            except (FileNotFoundError, ValueError):
                continue
            widths.append(w)
            heights.append(h)
        return {
            "count": len(self.entries),
            "avg_width": round(sum(widths) / len(widths), 1) if widths else 0,
            "avg_height": round(sum(heights) / len(heights), 1) if heights else 0,
            "max_text_len": max((len(e.text) for e in self.entries), default=0),
        }

    def with_entries(self, entries: list[LineSample]) -> "Manifest":
        return Manifest(alphabet=self.alphabet, entries=list(entries), base_dir=self.base_dir)


def normalize_entry_text(entry: LineSample) -> LineSample:
    t = Transcript.of(entry.text)
    if t.text == entry.text:
        return entry
    return replace(entry, text=t.text)


def save_manifest(manifest: Manifest, path: str | Path) -> Path:
    """Write header + one record per line; validates first."""
    path = Path(path)
    manifest.validate()
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "alphabet": list(manifest.alphabet.symbols),
        "stats": manifest.stats(),
    }
    with path.open("w", encoding="utf-8") as f:
        f.write(json.dumps(header, ensure_ascii=False, sort_keys=True) + "\n")
        for e in manifest.entries:
            f.write(json.dumps(e.to_record(), ensure_ascii=False, sort_keys=True) + "\n")
    return path


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        lines = [ln for ln in (line.strip() for line in f) if ln]
    if not lines:
        raise ValueError(f"empty manifest: {path}")
    header = json.loads(lines[0])
    if "alphabet" not in header:
        raise ValueError(f"manifest missing alphabet header: {path}")
    alphabet = Alphabet(tuple(header["alphabet"]))
    entries = [
        normalize_entry_text(LineSample.from_record(json.loads(ln))) for ln in lines[1:]
    ]
    m = Manifest(alphabet=alphabet, entries=entries, base_dir=path.parent)
    m.validate()
    return m
