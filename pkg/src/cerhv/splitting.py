"""Leakage-free page-level dataset splitting.

Handwriting pages are frequently re-copied from shared prompts, so line-level
random splits leak near-identical text between train and eval. Splitting here
happens at page granularity: exact duplicate pages are collapsed, pages
entangled with any other page (transcript similarity above the threshold)
are confined to train, and val/test draw only from the isolated pool.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .manifest import Manifest
from .metrics import page_similarity, pages_similar

DEFAULT_SIMILARITY_THRESHOLD = 0.85
DEFAULT_RATIOS = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class PageAssignment:
    """Split tag per page id; collapsed duplicates map to 'dropped'."""

    tags: dict[str, str]

    def pages(self, tag: str) -> list[str]:
        return sorted(p for p, t in self.tags.items() if t == tag)


class SplitConflictError(ValueError):
    """Raised when entangled pages leave too few isolated pages for val/test.

    conflicts holds the offending (page_a, page_b, similarity) edges.
    """

    def __init__(self, message: str, conflicts: list[tuple[str, str, float]]):
        super().__init__(message)
        self.conflicts = conflicts


def _similar_pairs(pages: dict[str, str], threshold: float) -> list[tuple[str, str, float]]:
    ids = sorted(pages)
    pairs = []
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            # cheap length gate before the banded distance
            la, lb = len(pages[a]), len(pages[b])
            denom = max(1, la, lb)
            if abs(la - lb) / denom >= (1.0 - threshold):
                continue
            if pages_similar(pages[a], pages[b], threshold):
                pairs.append((a, b, page_similarity(pages[a], pages[b])))
    return pairs


def split_pages(
    pages: dict[str, str],
    *,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
    seed: int = 0,
) -> PageAssignment:
    """Assign train/val/test at page level without transcript leakage.

    pages maps page id to the page's full transcript. Exact duplicates keep
    only the lexicographically first id; the rest are dropped. Pages similar
    to any other surviving page are pinned to train. Val/test counts are
    rounded shares of the surviving page count, drawn from the isolated pool
    by seeded shuffle.
    """
    if len(pages) < 3:
        raise ValueError("need at least 3 pages to split")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")

    seen_text: dict[str, str] = {}
    tags: dict[str, str] = {}
    survivors: dict[str, str] = {}
    for pid in sorted(pages):
        text = pages[pid]
        if text in seen_text:
            tags[pid] = "dropped"
        else:
            seen_text[text] = pid
            survivors[pid] = text

    conflicts = _similar_pairs(survivors, similarity_threshold)
    entangled = {p for a, b, _ in conflicts for p in (a, b)}
    isolated = sorted(p for p in survivors if p not in entangled)

    n = len(survivors)
    n_val = int(np.floor(ratios[1] * n + 0.5))
    n_test = int(np.floor(ratios[2] * n + 0.5))
    if n_val + n_test > len(isolated):
        raise SplitConflictError(
            f"need {n_val + n_test} isolated pages for val/test but only "
            f"{len(isolated)} of {n} pages are below the "
            f"{similarity_threshold} similarity threshold; conflicting pairs: "
            + ", ".join(f"{a}~{b}({s:.3f})" for a, b, s in conflicts),
            conflicts,
        )

    rng = np.random.default_rng(seed)
    pool = [isolated[i] for i in rng.permutation(len(isolated))]
    val_pages = set(pool[:n_val])
    test_pages = set(pool[n_val: n_val + n_test])
    for pid in survivors:
        if pid in val_pages:
            tags[pid] = "val"
        elif pid in test_pages:
            tags[pid] = "test"
        else:
            tags[pid] = "train"
    return PageAssignment(tags=tags)


def audit_split(
    pages: dict[str, str],
    assignment: PageAssignment,
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
) -> list[tuple[str, str, float]]:
    """Post-hoc leakage check: (val|test, train) page pairs above threshold.

    Returns the violations; an empty list certifies the split. This is the
    independent oracle for split_pages: it recomputes similarity directly
    instead of trusting the splitter's bookkeeping.
    """
    eval_pages = [p for p, t in assignment.tags.items() if t in ("val", "test")]
    train_pages = [p for p, t in assignment.tags.items() if t == "train"]
    violations = []
    for e in sorted(eval_pages):
        for t in sorted(train_pages):
            sim = page_similarity(pages[e], pages[t])
            if sim > similarity_threshold:
                violations.append((e, t, sim))
    return violations


def page_transcripts(manifest: Manifest) -> dict[str, str]:
    """Page id -> concatenated line transcripts (line id order)."""
    pages: dict[str, list[tuple[str, str]]] = {}
    for e in manifest.entries:
        if e.page is None:
            raise ValueError(f"sample {e.id} has no page id; page split impossible")
        pages.setdefault(e.page, []).append((e.id, e.text))
    return {
        pid: "".join(text for _, text in sorted(lines))
        for pid, lines in pages.items()
    }


def apply_page_assignment(manifest: Manifest, assignment: PageAssignment) -> Manifest:
    """Rewrite sample splits from their page's tag; dropped pages vanish."""
    entries = []
    for e in manifest.entries:
        tag = assignment.tags.get(e.page)
        if tag is None:
            raise ValueError(f"page {e.page!r} missing from assignment")
        if tag == "dropped":
            continue
        entries.append(replace(e, split=tag))
    return manifest.with_entries(entries)
