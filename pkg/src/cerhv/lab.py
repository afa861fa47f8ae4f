"""Desk-scale synthetic experiments: learnability, noise lab, cleaning.

These runs are the scaled-down stand-ins for the paper-scale studies: a few
hundred pseudo-glyph lines instead of datasets, minutes of CPU instead of
GPU-hours. The CLI and the acceptance suite both drive this module so the
published numbers and the gate run the same code path.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig
from .ctc import Alphabet
from .detector import (
    DEFAULT_TAU,
    ScoreReport,
    TrainingOutcome,
    manifest_preprocess_spec,
    mean_cer,
    precision_at_k,
    score_samples,
    select_flagged,
    train_with_early_stopping,
)
from .manifest import INJECTABLE_CATEGORIES, Manifest, save_manifest
from .model import CRNN, ModelConfig, TrainConfig
from .preprocess import PreprocessSpec, resize_pad
from .review import auto_verdicts_from_truth, build_cleaned_manifest
from .synth import RenderParams, build_synthetic_manifest, inject_noise

# 10% total, spread evenly over the five injectable categories
MIXED_NOISE_RATES = {c: 0.02 for c in INJECTABLE_CATEGORIES}

LAB_ALPHABET = Alphabet.of("abcdefghij")


@dataclass(frozen=True)
class LabConfig:
    """Desk-harness knobs; training defaults deviate from the paper-scale
    ones only where CPU-minute budgets demand it."""

    count: int = 500
    seed: int = 0
    min_len: int = 4
    max_len: int = 8
    horizontal_pad: int = 16
    max_epochs: int = 60
    patience: int = 8
    batch_size: int = 16
    learning_rate: float = 1e-3
    tau: float = DEFAULT_TAU
    augment: bool = False
    render: RenderParams = RenderParams()


def build_lab_dataset(
    workdir: str | Path,
    config: LabConfig,
    rates: dict[str, float] | None = None,
) -> Manifest:
    """Render `count` lines, split them, optionally corrupt every split."""
    manifest = build_synthetic_manifest(
        Path(workdir),
        count=config.count,
        alphabet=LAB_ALPHABET,
        seed=config.seed,
        min_len=config.min_len,
        max_len=config.max_len,
        params=config.render,
    )
    if rates:
        manifest = inject_noise(
            manifest,
            rates,
            seed=config.seed,
            params=config.render,
            splits=("train", "val", "test"),
        )
    save_manifest(manifest, Path(workdir) / "manifest.jsonl")
    return manifest


def lab_train_config(config: LabConfig) -> TrainConfig:
    return TrainConfig(
        max_epochs=config.max_epochs,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        patience=config.patience,
        seed=config.seed,
    )


def train_lab_model(
    manifest: Manifest,
    config: LabConfig,
    spec: PreprocessSpec | None = None,
    progress=None,
) -> tuple[TrainingOutcome, PreprocessSpec]:
    if spec is None:
        spec = manifest_preprocess_spec(manifest, horizontal_pad=config.horizontal_pad)
    model_config = ModelConfig.desk(
        spec.output_height, spec.output_width, manifest.alphabet.size
    )
    outcome = train_with_early_stopping(
        manifest,
        spec,
        model_config,
        lab_train_config(config),
        augment_config=AugmentConfig() if config.augment else None,
        progress=progress,
    )
    return outcome, spec


def split_mean_cer(
    model: CRNN, manifest: Manifest, split: str, spec: PreprocessSpec
) -> float:
    entries = manifest.split_entries(split)
    images = np.stack([resize_pad(manifest.read_image(e.id), spec) for e in entries])
    return mean_cer(model, images, [e.text for e in entries], manifest.alphabet)


# ---------------------------------------------------------------------------
# learnability


@dataclass
class LearnabilityResult:
    seed: int
    t_conv: int
    best_epoch: int
    best_val_cer: float
    test_cer: float
    elapsed_s: float
    stopped_early: bool

    def to_record(self) -> dict:
        return asdict(self)


def run_learnability(workdir: str | Path, seed: int, count: int = 500) -> LearnabilityResult:
    """Train the desk preset on clean synthetic lines; report held-out CER."""
    config = LabConfig(count=count, seed=seed)
    workdir = Path(workdir)
    t0 = time.time()
    manifest = build_lab_dataset(workdir, config)
    outcome, spec = train_lab_model(manifest, config)
    test_cer = split_mean_cer(outcome.model, manifest, "test", spec)
    return LearnabilityResult(
        seed=seed,
        t_conv=outcome.t_conv,
        best_epoch=outcome.best_epoch,
        best_val_cer=outcome.best_val_cer,
        test_cer=test_cer,
        elapsed_s=time.time() - t0,
        stopped_early=outcome.t_conv < config.max_epochs,
    )


# ---------------------------------------------------------------------------
# noise lab


@dataclass
class NoiseLabResult:
    seed: int
    injected: int
    precision_at_injected: float
    separation: float  # mean CER(injected) - mean CER(clean)
    per_category_recall: dict[str, float]
    flagged: int
    t_conv: int
    best_val_cer: float
    elapsed_s: float
    manifest: Manifest = field(repr=False, default=None)
    outcome: TrainingOutcome = field(repr=False, default=None)
    spec: PreprocessSpec = field(repr=False, default=None)
    report: ScoreReport = field(repr=False, default=None)

    def to_record(self) -> dict:
        return {
            "seed": self.seed,
            "injected": self.injected,
            "precision_at_injected": self.precision_at_injected,
            "separation": self.separation,
            "per_category_recall": self.per_category_recall,
            "flagged": self.flagged,
            "t_conv": self.t_conv,
            "best_val_cer": self.best_val_cer,
            "elapsed_s": self.elapsed_s,
        }


def score_all_splits(
    model: CRNN, manifest: Manifest, spec: PreprocessSpec
) -> ScoreReport:
    """Pooled ranking across train/val/test, re-ranked as one population."""
    scores = []
    unreadable = []
    for split in ("train", "val", "test"):
        if not manifest.split_entries(split):
            continue
        part = score_samples(model, manifest, split, spec)
        scores.extend(part.scores)
        unreadable.extend(part.unreadable)
    scores.sort(key=lambda s: (-s.cer, s.sample_id))
    for pos, s in enumerate(scores, start=1):
        s.rank = pos
    return ScoreReport(scores=scores, unreadable=unreadable)


def run_noise_lab(
    workdir: str | Path,
    seed: int,
    count: int = 1000,
    rates: dict[str, float] | None = None,
) -> NoiseLabResult:
    """Scaled detector-precision study: corrupt, train, rank, measure."""
    rates = dict(rates) if rates else dict(MIXED_NOISE_RATES)
    config = LabConfig(count=count, seed=seed)
    workdir = Path(workdir)
    t0 = time.time()
    manifest = build_lab_dataset(workdir, config, rates=rates)
    outcome, spec = train_lab_model(manifest, config)
    report = score_all_splits(outcome.model, manifest, spec)

    truth = {e.id: bool(e.noise) for e in manifest.entries}
    injected_ids = [e.id for e in manifest.entries if e.noise]
    injected = len(injected_ids)
    precision = precision_at_k(report.scores, truth, k=injected) if injected else None

    noisy_cers = [s.cer for s in report.scores if truth[s.sample_id]]
    clean_cers = [s.cer for s in report.scores if not truth[s.sample_id]]
    separation = float(np.mean(noisy_cers) - np.mean(clean_cers)) if injected else 0.0

    flag_set = select_flagged(report.scores, config.tau)
    flagged_ids = set(flag_set.ids())
    recall = {}
    for cat in rates:
        cat_ids = [e.id for e in manifest.entries if e.noise == cat]
        if cat_ids:
            recall[cat] = sum(1 for i in cat_ids if i in flagged_ids) / len(cat_ids)

    return NoiseLabResult(
        seed=seed,
        injected=injected,
        precision_at_injected=precision.value if precision else float("nan"),
        separation=separation,
        per_category_recall=recall,
        flagged=len(flag_set.flagged),
        t_conv=outcome.t_conv,
        best_val_cer=outcome.best_val_cer,
        elapsed_s=time.time() - t0,
        manifest=manifest,
        outcome=outcome,
        spec=spec,
        report=report,
    )


# ---------------------------------------------------------------------------
# cleaning comparison


@dataclass
class CleaningResult:
    raw_eval_cer: float       # raw model on the raw test split
    cleaned_eval_cer: float   # raw model on the cleaned test split
    raw_val_cer: float        # raw model on the cleaned val split
    retrained_val_cer: float  # cleaned-retrained model on the cleaned val split
    removed: int
    kept_flagged: int

    def to_record(self) -> dict:
        return asdict(self)


def run_cleaning_comparison(
    workdir: str | Path, lab: NoiseLabResult, config: LabConfig | None = None
) -> CleaningResult:
    """Scaled Table-5 analogue: clean by truth-oracle verdicts, re-measure.

    The truth oracle stands in for the human reviewer: every flagged
    injected sample is removed, every flagged clean sample kept. The same
    preprocess spec serves both training runs so CERs compare like for like.
    """
    config = config or LabConfig(count=len(lab.manifest.entries), seed=lab.seed)
    manifest = lab.manifest
    flag_set = select_flagged(lab.report.scores, config.tau)
    verdicts = auto_verdicts_from_truth(manifest, flag_set.ids())
    cleaned = build_cleaned_manifest(manifest, verdicts, flag_set.ids())
    save_manifest(cleaned, Path(workdir) / "cleaned.jsonl")
    removed = len(manifest.entries) - len(cleaned.entries)
    kept = sum(1 for v in verdicts.values() if v.action == "keep")

    raw_model = lab.outcome.model
    raw_eval = split_mean_cer(raw_model, manifest, "test", lab.spec)
    cleaned_eval = split_mean_cer(raw_model, cleaned, "test", lab.spec)

    raw_val = split_mean_cer(raw_model, cleaned, "val", lab.spec)
    retrain_outcome, _ = train_lab_model(cleaned, config, spec=lab.spec)
    retrained_val = split_mean_cer(retrain_outcome.model, cleaned, "val", lab.spec)

    return CleaningResult(
        raw_eval_cer=raw_eval,
        cleaned_eval_cer=cleaned_eval,
        raw_val_cer=raw_val,
        retrained_val_cer=retrained_val,
        removed=removed,
        kept_flagged=kept,
    )


def write_lab_report(path: str | Path, records: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    return path
