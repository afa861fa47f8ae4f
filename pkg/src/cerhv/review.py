"""Human-verification stage: verdict log, review sessions, cleaned datasets.

Verdicts append to a durable JSONL log; the last entry per sample is the
effective verdict and the full history stays on disk. Everything a session
serves (pending order, counters, reports) is derived from the manifest, the
score report, and that log, so a process restart loses nothing.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import threading
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .detector import DEFAULT_TAU, SampleScore, load_score_report
from .manifest import ERROR_CATEGORIES, Manifest, load_manifest, save_manifest
from .metrics import Transcript
from .synth import rotate180

ACTIONS = ("relabel", "fix_image", "remove", "keep")

# Categories the pipeline removes by default; overridable per verdict.
DEFAULT_REMOVE_CATEGORIES = ("script_mismatch", "irrelevant")

INJECTED_ERROR_TABLE_CATEGORIES = ERROR_CATEGORIES[:5]


class VerdictError(ValueError):
    """A verdict that violates the taxonomy/action invariants."""


@dataclass(frozen=True)
class Verdict:
    sample_id: str
    category: str
    action: str
    corrected_text: str | None = None
    corrected_image: str | None = None
    reviewer: str = ""
    timestamp: str = ""

    def validate(self) -> None:
        if self.category not in ERROR_CATEGORIES:
            raise VerdictError(f"unknown category {self.category!r}")
        if self.action not in ACTIONS:
            raise VerdictError(f"unknown action {self.action!r}")
        if self.action == "relabel" and not self.corrected_text:
            raise VerdictError("relabel requires corrected_text")
        if self.category == "valid_but_hard" and self.action != "keep":
            raise VerdictError("valid_but_hard samples must be kept")
        if self.action == "fix_image" and not self.corrected_image:
            raise VerdictError("fix_image requires a corrected image reference")

    def content_key(self) -> str:
        """Identity of the reviewer-provided content, timestamp excluded."""
        payload = asdict(self)
        payload.pop("timestamp")
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)

    def to_record(self) -> dict:
        rec = {k: v for k, v in asdict(self).items() if v not in (None, "")}
        rec.setdefault("timestamp", self.timestamp)
        return rec

    @staticmethod
    def from_record(rec: dict) -> "Verdict":
        return Verdict(
            sample_id=rec["sample_id"],
            category=rec["category"],
            action=rec["action"],
            corrected_text=rec.get("corrected_text"),
            corrected_image=rec.get("corrected_image"),
            reviewer=rec.get("reviewer", ""),
            timestamp=rec.get("timestamp", ""),
        )


def _utcnow() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


class VerdictLog:
    """Append-only JSONL verdict store; one writer, replayable history."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def load(self) -> list[Verdict]:
        if not self.path.exists():
            return []
        out = []
        with self.path.open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    out.append(Verdict.from_record(json.loads(line)))
        return out

    def effective(self) -> dict[str, Verdict]:
        """Last verdict per sample, in log order."""
        eff: dict[str, Verdict] = {}
        for v in self.load():
            eff[v.sample_id] = v
        return eff

    def append(self, verdict: Verdict) -> bool:
        """Durably append; returns False when the submission is a no-op
        (byte-identical to the sample's current effective verdict)."""
        verdict.validate()
        with self._lock:
            current = self.effective().get(verdict.sample_id)
            if current is not None and current.content_key() == verdict.content_key():
                return False
            if not verdict.timestamp:
                verdict = replace(verdict, timestamp=_utcnow())
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(verdict.to_record(), ensure_ascii=False, sort_keys=True) + "\n")
                f.flush()
                os.fsync(f.fileno())
        return True


# ---------------------------------------------------------------------------
# sessions


@dataclass
class ReviewSession:
    session_id: str
    root: Path
    manifest_path: Path
    scores_path: Path
    tau: float
    manifest: Manifest
    flagged: list[SampleScore]  # detector rank order
    log: VerdictLog

    @staticmethod
    def _derive_id(manifest_path: Path, scores_path: Path, tau: float) -> str:
        h = hashlib.blake2b(
            f"{manifest_path.resolve()}|{scores_path.resolve()}|{tau}".encode(),
            digest_size=6,
        )
        return f"s{h.hexdigest()}"

    @property
    def dir(self) -> Path:
        return self.root / self.session_id

    def pending(self) -> list[SampleScore]:
        done = set(self.log.effective())
        return [s for s in self.flagged if s.sample_id not in done]

    def reviewed(self) -> list[Verdict]:
        flagged_ids = {s.sample_id for s in self.flagged}
        return [v for k, v in self.log.effective().items() if k in flagged_ids]

    def counters(self) -> dict[str, int]:
        counts = {c: 0 for c in ERROR_CATEGORIES}
        for v in self.reviewed():
            counts[v.category] += 1
        return counts

    def submit(self, verdict: Verdict) -> bool:
        known = {s.sample_id for s in self.flagged}
        if verdict.sample_id not in known:
            raise KeyError(verdict.sample_id)
        return self.log.append(verdict)

    def bundle(self, score: SampleScore) -> dict:
        entry = self.manifest.by_id(score.sample_id)
        return {
            "sample_id": score.sample_id,
            "label": entry.text,
            "prediction": score.prediction,
            "cer": score.cer,
            "rank": score.rank,
            "split": entry.split,
            "image": f"/images/{score.sample_id}",
            "remaining": len(self.pending()),
        }


class SessionStore:
    """Disk-backed sessions under one root; restart-safe by construction."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, ReviewSession] = {}
        self._lock = threading.Lock()

    def create(
        self,
        manifest_path: str | Path,
        scores_path: str | Path,
        tau: float = DEFAULT_TAU,
    ) -> ReviewSession:
        manifest_path = Path(manifest_path)
        scores_path = Path(scores_path)
        if not manifest_path.exists():
            raise FileNotFoundError(manifest_path)
        if not scores_path.exists():
            raise FileNotFoundError(scores_path)
        session_id = ReviewSession._derive_id(manifest_path, scores_path, tau)
        existing = self.root / session_id / "session.json"
        if existing.exists():
            return self.get(session_id)
        meta = {
            "session_id": session_id,
            "manifest": str(manifest_path.resolve()),
            "scores": str(scores_path.resolve()),
            "tau": tau,
            "created": _utcnow(),
        }
        (self.root / session_id).mkdir(parents=True, exist_ok=True)
        existing.write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
        return self.get(session_id)

    def get(self, session_id: str) -> ReviewSession:
        with self._lock:
            if session_id in self._cache:
                return self._cache[session_id]
        meta_path = self.root / session_id / "session.json"
        if not meta_path.exists():
            raise KeyError(session_id)
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        manifest = load_manifest(meta["manifest"])
        report = load_score_report(meta["scores"])
        tau = float(meta["tau"])
        flagged = [s for s in report.scores if s.cer > tau]
        session = ReviewSession(
            session_id=session_id,
            root=self.root,
            manifest_path=Path(meta["manifest"]),
            scores_path=Path(meta["scores"]),
            tau=tau,
            manifest=manifest,
            flagged=flagged,
            log=VerdictLog(self.root / session_id / "verdicts.jsonl"),
        )
        with self._lock:
            self._cache[session_id] = session
        return session

    def session_ids(self) -> list[str]:
        return sorted(
            p.parent.name for p in self.root.glob("*/session.json")
        )

    def find_sample(self, sample_id: str) -> tuple[ReviewSession, str] | None:
        for sid in self.session_ids():
            session = self.get(sid)
            try:
                session.manifest.by_id(sample_id)
            except KeyError:
                continue
            return session, sample_id
        return None


# ---------------------------------------------------------------------------
# fix tools


def apply_fix_tool(session: ReviewSession, sample_id: str, fix: dict) -> str:
    """Run a built-in image fix; returns the corrected image reference.

    Corrected images live under the manifest's own tree (fixed/) so cleaned
    manifests stay relocatable with their dataset.
    """
    manifest = session.manifest
    img = manifest.read_image(sample_id)
    kind = fix.get("type")
    if kind == "rotate180":
        out = rotate180(img)
    elif kind == "crop_band":
        y0, y1 = int(fix["y0"]), int(fix["y1"])
        if not 0 <= y0 < y1 <= img.shape[0]:
            raise VerdictError(f"crop band [{y0},{y1}) outside image height {img.shape[0]}")
        out = img[y0:y1].copy()
    else:
        raise VerdictError(f"unknown fix tool {kind!r}")
    rel = f"fixed/{sample_id}.png"
    manifest.write_image_at(rel, out)
    return rel


# ---------------------------------------------------------------------------
# cleaning


class PendingVerdictsError(RuntimeError):
    def __init__(self, pending: list[str]):
        super().__init__(
            f"{len(pending)} flagged sample(s) lack verdicts: "
            + ", ".join(pending[:10])
            + ("..." if len(pending) > 10 else "")
        )
        self.pending = pending


def build_cleaned_manifest(
    manifest: Manifest,
    verdicts: dict[str, Verdict],
    flagged_ids: list[str],
    allow_partial: bool = False,
) -> Manifest:
    """Materialize D' from the source manifest plus effective verdicts.

    Removed samples vanish, relabeled samples carry corrected text, fixed
    samples reference their corrected images; everything else is untouched.
    The source manifest is never mutated.
    """
    pending = [i for i in flagged_ids if i not in verdicts]
    if pending and not allow_partial:
        raise PendingVerdictsError(pending)
    entries = []
    for e in manifest.entries:
        v = verdicts.get(e.id)
        if v is None:
            entries.append(e)
            continue
        v.validate()
        if v.action == "remove":
            continue
        if v.action == "relabel":
            entries.append(replace(e, text=Transcript.of(v.corrected_text).text))
        elif v.action == "fix_image":
            entries.append(replace(e, image=v.corrected_image))
        else:
            entries.append(e)
    cleaned = manifest.with_entries(entries)
    cleaned.validate()
    return cleaned


def auto_verdicts_from_truth(manifest: Manifest, flagged_ids: list[str]) -> dict[str, Verdict]:
    """Scripted reviewer for synthetic data: verdict = injected truth.

    Injected corruptions are content errors, so every true-noise sample is
    removed (the paper's cleaning is by exclusion); clean-but-flagged samples
    are kept as valid_but_hard.
    """
    out = {}
    for sample_id in flagged_ids:
        entry = manifest.by_id(sample_id)
        if entry.noise:
            out[sample_id] = Verdict(
                sample_id=sample_id,
                category=entry.noise,
                action="remove",
                reviewer="truth-oracle",
            )
        else:
            out[sample_id] = Verdict(
                sample_id=sample_id,
                category="valid_but_hard",
                action="keep",
                reviewer="truth-oracle",
            )
    return out


# ---------------------------------------------------------------------------
# reports


def category_report(session: ReviewSession) -> dict:
    """Per-split category counts, totals, and reviewer-confirmed precision."""
    eff = {v.sample_id: v for v in session.reviewed()}
    split_of = {e.id: e.split for e in session.manifest.entries}
    splits: dict[str, dict[str, int]] = {}
    for sample_id, v in eff.items():
        row = splits.setdefault(split_of[sample_id], {c: 0 for c in ERROR_CATEGORIES})
        row[v.category] += 1

    totals = {c: 0 for c in ERROR_CATEGORIES}
    for row in splits.values():
        for c in ERROR_CATEGORIES:
            totals[c] += row[c]
    reviewed = len(eff)
    confirmed = reviewed - totals["valid_but_hard"]
    return {
        "splits": {
            split: {**row, "total_errors": sum(row[c] for c in INJECTED_ERROR_TABLE_CATEGORIES)}
            for split, row in sorted(splits.items())
        },
        "totals": {
            **totals,
            "total_errors": sum(totals[c] for c in INJECTED_ERROR_TABLE_CATEGORIES),
        },
        "reviewed": reviewed,
        "pending": len(session.pending()),
        "precision": confirmed / reviewed if reviewed else None,
    }


def format_report_table(report: dict) -> str:
    """Aligned text rendering of the category distribution."""
    cols = list(INJECTED_ERROR_TABLE_CATEGORIES) + ["total_errors", "valid_but_hard"]
    header = ["split"] + [c.replace("_", " ") for c in cols]
    rows = [header]
    for split, row in report["splits"].items():
        rows.append([split] + [str(row[c]) for c in cols])
    rows.append(["all"] + [str(report["totals"][c]) for c in cols])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for i, r in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    p = report["precision"]
    lines.append("")
    lines.append(
        f"reviewed: {report['reviewed']}  pending: {report['pending']}  "
        f"precision: {'n/a' if p is None else f'{p:.3f}'}"
    )
    return "\n".join(lines)


def write_cleaned_manifest(
    session: ReviewSession, out_path: str | Path, allow_partial: bool = False
) -> Path:
    eff = session.log.effective()
    flagged_ids = [s.sample_id for s in session.flagged]
    cleaned = build_cleaned_manifest(
        session.manifest, eff, flagged_ids, allow_partial=allow_partial
    )
    return save_manifest(cleaned, out_path)
