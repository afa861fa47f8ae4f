"""Label-error detection by per-sample CER at the convergence epoch.

Training runs until validation CER stops improving for `patience` epochs.
The best-validation parameters then score every sample: predict, compare
against the stored label, rank by descending CER, and flag everything
strictly above the review threshold. Scores are the interface to Stage 2.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment
from .ctc import Alphabet
from .images import png_size
from .manifest import LineSample, Manifest
from .metrics import cer
from .model import (
    CRNN,
    ModelConfig,
    TrainConfig,
    Trainer,
    build_model,
    predict_batch,
)
from .preprocess import PreprocessSpec, compute_targets, resize_pad

DEFAULT_TAU = 0.25
SCORE_BATCH = 32


# ---------------------------------------------------------------------------
# early stopping


@dataclass
class EarlyStopping:
    """Strict-improvement patience counter.

    An epoch improves when its validation CER is strictly lower than every
    earlier epoch's. After `patience` consecutive non-improving epochs the
    run stops; the best epoch is the first one to reach the minimum.
    """

    patience: int
    best: float = float("inf")
    best_epoch: int = 0
    streak: int = 0

    def update(self, epoch: int, val_cer: float) -> bool:
        """Record one epoch; returns True when training should stop now."""
        if val_cer < self.best:
            self.best = val_cer
            self.best_epoch = epoch
            self.streak = 0
        else:
            self.streak += 1
        return self.streak >= self.patience


def simulate_early_stopping(val_cers: list[float], patience: int) -> tuple[int, int]:
    """(stop_epoch, best_epoch) for a fixed validation-CER sequence.

    Epochs are 1-based; a sequence that never exhausts patience "stops" at
    its last epoch, mirroring a full-length run.
    """
    ctl = EarlyStopping(patience=patience)
    stop = len(val_cers)
    for i, v in enumerate(val_cers, start=1):
        if ctl.update(i, v):
            stop = i
            break
    return stop, ctl.best_epoch


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_cer: float


@dataclass
class TrainingOutcome:
    model: CRNN  # parameters restored to the best-validation checkpoint
    t_conv: int  # stop epoch per Algorithm 1
    best_epoch: int
    history: list[EpochRecord] = field(default_factory=list)

    @property
    def best_val_cer(self) -> float:
        return min(r.val_cer for r in self.history)


def manifest_preprocess_spec(
    manifest: Manifest, horizontal_pad: int = 64
) -> PreprocessSpec:
    """Targets from the train split's PNG headers, snapped for the encoder."""
    dims = []
    for e in manifest.split_entries("train"):
        dims.append(png_size(manifest.image_path(e)))
    return compute_targets(dims, horizontal_pad=horizontal_pad).snapped(8)


def _load_split_arrays(
    manifest: Manifest, split: str, spec: PreprocessSpec
) -> tuple[list[LineSample], np.ndarray]:
    entries = manifest.split_entries(split)
    if not entries:
        raise ValueError(f"manifest has no {split} entries")
    arrays = np.stack(
        [resize_pad(manifest.read_image(e.id), spec) for e in entries]
    )
    return entries, arrays


def mean_cer(model: CRNN, images: np.ndarray, texts: list[str], alphabet: Alphabet) -> float:
    """Aggregate CER = mean of per-sample CER in batches."""
    values = []
    for i in range(0, len(texts), SCORE_BATCH):
        preds = predict_batch(model, images[i: i + SCORE_BATCH], alphabet)
        values.extend(
            cer(p, t).value for p, t in zip(preds, texts[i: i + SCORE_BATCH])
        )
    return float(np.mean(values))


def train_with_early_stopping(
    manifest: Manifest,
    spec: PreprocessSpec,
    model_config: ModelConfig,
    train_config: TrainConfig,
    augment_config: AugmentConfig | None = None,
    progress=None,
) -> TrainingOutcome:
    """Algorithm 1's training stage: patience-stopped CRNN training.

    Validation CER is computed each epoch without augmentation; the returned
    model carries the lowest-validation-CER parameters while t_conv records
    the epoch training actually stopped at.
    """
    if spec.output_height != model_config.input_height or spec.output_width != model_config.input_width:
        raise ValueError("preprocess spec and model config disagree on input dims")
    train_entries, train_arrays = _load_split_arrays(manifest, "train", spec)
    val_entries, val_arrays = _load_split_arrays(manifest, "val", spec)
    val_texts = [e.text for e in val_entries]

    model = build_model(
        model_config, seed=train_config.seed, deterministic=train_config.deterministic
    )
    trainer = Trainer(model, train_config, manifest.alphabet)
    stopper = EarlyStopping(patience=train_config.patience)
    rng = np.random.default_rng(train_config.seed)

    history: list[EpochRecord] = []
    best_state = None
    t_conv = 0
    for epoch in range(1, train_config.max_epochs + 1):
        order = rng.permutation(len(train_entries))
        losses = []
        for start in range(0, len(order), train_config.batch_size):
            idx = order[start: start + train_config.batch_size]
            batch = train_arrays[idx]
            if augment_config is not None:
                batch = np.stack(
                    [
                        augment(img, seed=int(rng.integers(0, 2**31)), config=augment_config)
                        for img in batch
                    ]
                )
            texts = [train_entries[i].text for i in idx]
            ids = [train_entries[i].id for i in idx]
            try:
                losses.append(trainer.training_step(batch, texts, ids))
            except RuntimeError as exc:
                raise RuntimeError(f"training diverged at epoch {epoch}: {exc}") from exc
        trainer.end_epoch()

        val_cer = mean_cer(model, val_arrays, val_texts, manifest.alphabet)
        record = EpochRecord(epoch=epoch, train_loss=float(np.mean(losses)), val_cer=val_cer)
        history.append(record)
        if progress is not None:
            progress(record)

        stop = stopper.update(epoch, val_cer)
        if stopper.best_epoch == epoch:
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        t_conv = epoch
        if stop:
            break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return TrainingOutcome(
        model=model, t_conv=t_conv, best_epoch=stopper.best_epoch, history=history
    )


# ---------------------------------------------------------------------------
# scoring


@dataclass
class SampleScore:
    sample_id: str
    prediction: str
    cer: float
    edits: int
    ref_len: int
    rank: int = 0


@dataclass
class ScoreReport:
    scores: list[SampleScore]
    unreadable: list[str] = field(default_factory=list)

    def by_id(self) -> dict[str, SampleScore]:
        return {s.sample_id: s for s in self.scores}


def score_samples(
    model: CRNN,
    manifest: Manifest,
    split: str,
    spec: PreprocessSpec,
) -> ScoreReport:
    """Per-sample CER of the scoring model, ranked worst first, ties by id.

    Samples whose image cannot be read are excluded from the ranking and
    reported in `unreadable` alongside a warning.
    """
    entries = manifest.split_entries(split)
    if not entries:
        raise ValueError(f"manifest has no {split} entries")
    readable, images, unreadable = [], [], []
    for e in entries:
        try:
            images.append(resize_pad(manifest.read_image(e.id), spec))
        except (FileNotFoundError, ValueError, OSError):
            unreadable.append(e.id)
            continue
        readable.append(e)
    if unreadable:
        warnings.warn(
            f"{len(unreadable)} sample(s) excluded from ranking: unreadable images"
        )

    scores = []
    arrays = np.stack(images) if images else np.zeros((0, 1, 1), dtype=np.uint8)
    for i in range(0, len(readable), SCORE_BATCH):
        chunk = readable[i: i + SCORE_BATCH]
        preds = predict_batch(model, arrays[i: i + SCORE_BATCH], manifest.alphabet)
        for e, pred in zip(chunk, preds):
            score = cer(pred, e.text)
            scores.append(
                SampleScore(
                    sample_id=e.id,
                    prediction=pred,
                    cer=score.value,
                    edits=score.edits,
                    ref_len=score.ref_len,
                )
            )
    scores.sort(key=lambda s: (-s.cer, s.sample_id))
    for pos, s in enumerate(scores, start=1):
        s.rank = pos
    return ScoreReport(scores=scores, unreadable=unreadable)


@dataclass(frozen=True)
class FlagSet:
    threshold: float
    flagged: tuple[SampleScore, ...]

    def ids(self) -> list[str]:
        return [s.sample_id for s in self.flagged]


def select_flagged(scores: list[SampleScore], tau: float = DEFAULT_TAU) -> FlagSet:
    """S = {i : c_i > tau}; strictly greater, rank order preserved."""
    ordered = sorted(scores, key=lambda s: s.rank)
    return FlagSet(
        threshold=tau, flagged=tuple(s for s in ordered if s.cer > tau)
    )


@dataclass(frozen=True)
class PrecisionResult:
    value: float
    k_requested: int
    k_used: int

    @property
    def truncated(self) -> bool:
        return self.k_used < self.k_requested


def precision_at_k(
    scores: list[SampleScore], truth: dict[str, bool], k: int
) -> PrecisionResult:
    """Fraction of the top-k ranked samples whose truth marks them noisy."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ordered = sorted(scores, key=lambda s: s.rank)
    for s in ordered:
        if s.sample_id not in truth:
            raise ValueError(f"sample {s.sample_id} has no noise truth/verdict")
    k_used = min(k, len(ordered))
    top = ordered[:k_used]
    hits = sum(1 for s in top if truth[s.sample_id])
    return PrecisionResult(
        value=hits / k_used if k_used else 0.0, k_requested=k, k_used=k_used
    )


def write_score_report(path: str | Path, report: ScoreReport, tau: float = DEFAULT_TAU) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for s in report.scores:
            rec = {
                "id": s.sample_id,
                "pred": s.prediction,
                "cer": round(s.cer, 10),
                "rank": s.rank,
                "flagged": s.cer > tau,
            }
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    return path


def load_score_report(path: str | Path) -> ScoreReport:
    scores = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            scores.append(
                SampleScore(
                    sample_id=rec["id"],
                    prediction=rec["pred"],
                    cer=float(rec["cer"]),
                    edits=-1,
                    ref_len=-1,
                    rank=int(rec["rank"]),
                )
            )
    scores.sort(key=lambda s: s.rank)
    return ScoreReport(scores=scores)
