"""Character-level edit distance and CER scoring.

Everything downstream (noise ranking, evaluation, split leakage checks)
funnels through the single Levenshtein kernel in this module, so it is kept
dependency-free and heavily tested against a recursive reference.
"""
from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass


@dataclass(frozen=True)
class Transcript:
    """A line transcript: Unicode scalar values in logical order.

    ``normalized`` records that NFC canonical composition has been applied;
    comparing transcripts under different schemes is a caller bug.
    """

    text: str
    normalized: bool = False

    @staticmethod
    def of(raw: str) -> "Transcript":
        """Build a normalized transcript from raw text."""
        if any(0xD800 <= ord(ch) <= 0xDFFF for ch in raw):
            raise ValueError("transcript contains unpaired surrogates")
        return Transcript(unicodedata.normalize("NFC", raw), normalized=True)

    def normalize(self) -> "Transcript":
        if self.normalized:
            return self
        return Transcript.of(self.text)

    def __len__(self) -> int:
        return len(self.text)


def _as_text(value: "Transcript | str") -> str:
    if isinstance(value, Transcript):
        return value.normalize().text
    return Transcript.of(value).text


@dataclass(frozen=True)
class CerScore:
    """Edit count against a reference, normalized by reference length.

    ``value`` may exceed 1.0 when the prediction is much longer than the
    reference; the denominator is clamped to 1 so empty references still
    produce a finite, rankable score.
    """

    edits: int
    ref_len: int

    @property
    def value(self) -> float:
        return self.edits / max(1, self.ref_len)


def edit_distance(
    a: "Transcript | str",
    b: "Transcript | str",
    *,
    upper_bound: int | None = None,
) -> int:
    """Minimum number of codepoint insertions/deletions/substitutions a -> b.

    With ``upper_bound`` the computation runs in a diagonal band: the result
    is exact whenever it is <= upper_bound, otherwise ``upper_bound + 1`` is
    returned. Used by the split-leakage guard to reject far-apart pages
    cheaply.
    """
    s, t = _as_text(a), _as_text(b)
    if s == t:
        return 0
    # Strip common affixes; they never participate in an optimal script.
    lo = 0
    while lo < len(s) and lo < len(t) and s[lo] == t[lo]:
        lo += 1
    hi = 0
    while hi < len(s) - lo and hi < len(t) - lo and s[-1 - hi] == t[-1 - hi]:
        hi += 1
    s = s[lo: len(s) - hi]
    t = t[lo: len(t) - hi]
    if len(s) > len(t):
        s, t = t, s
    if not s:
        n = len(t)
        if upper_bound is not None and n > upper_bound:
            return upper_bound + 1
        return n
    if upper_bound is not None and len(t) - len(s) > upper_bound:
        return upper_bound + 1

    big = len(s) + len(t) + 1
    band = upper_bound if upper_bound is not None else big
    prev = [j if j <= band else big for j in range(len(t) + 1)]
    for i, cs in enumerate(s, 1):
        j_min = max(1, i - band)
        j_max = min(len(t), i + band)
        cur = [big] * (len(t) + 1)
        if i <= band:
            cur[0] = i
        row_best = big
        for j in range(j_min, j_max + 1):
            ct = t[j - 1]
            c = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (cs != ct),
            )
            cur[j] = c
            if c < row_best:
                row_best = c
        if row_best > band:
            return band + 1
        prev = cur
    d = prev[len(t)]
    if upper_bound is not None and d > upper_bound:
        return upper_bound + 1
    return d


def recursive_edit_distance(a: "Transcript | str", b: "Transcript | str") -> int:
    """Reference oracle: direct recursion over all edit scripts.

    Explores match/substitute, delete, and insert at every position
    (memoized on suffix indices so exhaustive tests stay tractable).
    Independent of the banded DP above by construction.
    """
    s, t = _as_text(a), _as_text(b)
    n, m = len(s), len(t)
    memo: list[int] = [-1] * ((n + 1) * (m + 1))

    def rec(i: int, j: int) -> int:
        key = i * (m + 1) + j
        r = memo[key]
        if r >= 0:
            return r
        if i == n:
            r = m - j
        elif j == m:
            r = n - i
        else:
            r = rec(i + 1, j + 1) + (s[i] != t[j])
            dele = rec(i + 1, j) + 1
            if dele < r:
                r = dele
            ins = rec(i, j + 1) + 1
            if ins < r:
                r = ins
        memo[key] = r
        return r

    return rec(0, 0)


def cer(pred: "Transcript | str", ref: "Transcript | str") -> CerScore:
    """Character error rate of a prediction against its reference label."""
    p, r = _as_text(pred), _as_text(ref)
    return CerScore(edits=edit_distance(p, r), ref_len=len(r))


def page_similarity(a: "Transcript | str", b: "Transcript | str") -> float:
    """Textual similarity of two pages in [0, 1]; 1.0 iff identical.

    Defined as 1 - d(a, b) / max(1, max(|a|, |b|)) over the concatenated
    line transcripts of each page. Symmetric.
    """
    s, t = _as_text(a), _as_text(b)
    denom = max(1, len(s), len(t))
    return 1.0 - edit_distance(s, t) / denom


def pages_similar(a: "Transcript | str", b: "Transcript | str", threshold: float) -> bool:
    """Whether page_similarity(a, b) > threshold, using a banded early-exit DP.

    Agrees with ``page_similarity(a, b) > threshold`` exactly: the band only
    short-circuits distances too large to matter, and the final comparison
    reuses the same float expression.
    """
    s, t = _as_text(a), _as_text(b)
    denom = max(1, len(s), len(t))
    bound = int(math.ceil((1.0 - threshold) * denom))
    d = edit_distance(s, t, upper_bound=bound)
    if d > bound:
        return False
    return (1.0 - d / denom) > threshold
