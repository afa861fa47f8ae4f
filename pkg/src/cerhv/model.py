"""CRNN recognizer: residual conv encoder, column max pooling, BiLSTM head.

The encoder downsamples height and width by 8 (stride-2 stem plus two 2x2
pools between the three residual groups), collapses height by column-wise
max, and hands W/8 feature frames to a stacked bidirectional LSTM whose two
directions are summed before the classifier. An auxiliary CTC shortcut
projects the pooled encoder features straight to class logits; it shapes
training gradients only and never participates in prediction.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .ctc import Alphabet, greedy_decode, required_frames

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    input_height: int
    input_width: int  # model-facing width, after padding
    alphabet_size: int
    input_channels: int = 1
    stem_channels: int = 32
    block_plan: tuple[tuple[int, int], ...] = ((2, 64), (3, 128), (2, 256))
    recurrent_layers: int = 3
    recurrent_hidden: int = 256
    aux_loss_weight: float = 0.1
    dropout_rate: float = 0.2

    def __post_init__(self):
        if self.input_height % 8 or self.input_width % 8:
            raise ValueError(
                f"input dims must be divisible by 8, got "
                f"{self.input_height}x{self.input_width}"
            )
        if self.aux_loss_weight < 0:
            raise ValueError("aux_loss_weight must be >= 0")
        channels = [c for _, c in self.block_plan]
        if any(a > b for a, b in zip(channels, channels[1:])):
            raise ValueError("block_plan channels must be nondecreasing")
        if len(self.block_plan) != 3:
            raise ValueError("encoder expects exactly 3 block groups")

    @property
    def frames(self) -> int:
        return self.input_width // 8

    @property
    def num_classes(self) -> int:
        return self.alphabet_size + 1  # plus blank

    @staticmethod
    def paper(input_height: int, input_width: int, alphabet_size: int) -> "ModelConfig":
        return ModelConfig(input_height, input_width, alphabet_size)

    @staticmethod
    def desk(input_height: int, input_width: int, alphabet_size: int) -> "ModelConfig":
        """Reduced preset that trains in CPU-minutes instead of GPU-hours."""
        return ModelConfig(
            input_height,
            input_width,
            alphabet_size,
            stem_channels=16,
            block_plan=((1, 16), (1, 32), (1, 64)),
            recurrent_layers=1,
            recurrent_hidden=64,
        )


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 800
    batch_size: int = 16
    learning_rate: float = 5e-4
    scheduler_milestones: tuple[float, ...] = (0.5, 0.75)
    scheduler_factor: float = 0.1
    patience: int = 20
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        ms = self.scheduler_milestones
        if any(not 0 < m < 1 for m in ms) or any(a >= b for a, b in zip(ms, ms[1:])):
            raise ValueError("milestones must be strictly increasing fractions in (0,1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def milestone_epochs(self) -> list[int]:
        return [max(1, int(round(m * self.max_epochs))) for m in self.scheduler_milestones]


class _PreActBlock(nn.Module):
    """3x3 pre-activation residual block; 1x1 skip when channels change."""

    def __init__(self, cin, cout):
        super().__init__()
        self.bn1 = nn.BatchNorm2d(cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.skip = nn.Conv2d(cin, cout, 1, bias=False) if cin != cout else None

    def forward(self, x):
        h = torch.relu(self.bn1(x))
        shortcut = x if self.skip is None else self.skip(h)
        h = self.conv1(h)
        h = self.conv2(torch.relu(self.bn2(h)))
        return h + shortcut


class CRNN(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.stem = nn.Sequential(
            nn.Conv2d(config.input_channels, config.stem_channels, 7,
                      stride=2, padding=3, bias=False),
            nn.BatchNorm2d(config.stem_channels),
            nn.ReLU(inplace=True),
        )
        groups = []
        cin = config.stem_channels
        for gi, (count, cout) in enumerate(config.block_plan):
            if gi > 0:
                groups.append(nn.MaxPool2d(2))
                groups.append(nn.Dropout2d(config.dropout_rate))
            for _ in range(count):
                groups.append(_PreActBlock(cin, cout))
                cin = cout
        self.blocks = nn.Sequential(*groups)
        feat = config.block_plan[-1][1]
        self.aux_head = nn.Linear(feat, config.num_classes)
        self.rnn = nn.LSTM(
            feat,
            config.recurrent_hidden,
            num_layers=config.recurrent_layers,
            bidirectional=True,
            batch_first=True,
        )
        self.pre_classifier_dropout = nn.Dropout(config.dropout_rate)
        self.classifier = nn.Linear(config.recurrent_hidden, config.num_classes)

    def _check_input(self, x: torch.Tensor) -> None:
        b, c, h, w = x.shape
        cfg = self.config
        if c != cfg.input_channels or h != cfg.input_height or w != cfg.input_width:
            raise ValueError(
                f"input {c}x{h}x{w} does not match config "
                f"{cfg.input_channels}x{cfg.input_height}x{cfg.input_width}"
            )

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """(B,C,H,W) -> (B, W/8, feat): column-wise max over pooled height."""
        self._check_input(x)
        h = self.blocks(self.stem(x))
        h = h.amax(dim=2)  # (B, feat, W/8)
        return h.transpose(1, 2)

    def head(self, frames: torch.Tensor) -> torch.Tensor:
        out, _ = self.rnn(frames)
        b, t, _ = out.shape
        out = out.view(b, t, 2, self.config.recurrent_hidden).sum(dim=2)
        out = self.pre_classifier_dropout(out)
        return self.classifier(out)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B,C,H,W) -> (B, T, K) log-probabilities."""
        logits = self.head(self.encode(x))
        return torch.log_softmax(logits, dim=-1)

    def forward_with_aux(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        frames = self.encode(x)
        main = torch.log_softmax(self.head(frames), dim=-1)
        aux = torch.log_softmax(self.aux_head(frames), dim=-1)
        return main, aux


def set_deterministic(seed: int) -> None:
    """Single-thread, seeded torch; forward passes become bit-stable."""
    torch.manual_seed(seed)
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)


def build_model(config: ModelConfig, seed: int = 0, deterministic: bool = True) -> CRNN:
    if deterministic:
        set_deterministic(seed)
    else:
        torch.manual_seed(seed)
    return CRNN(config)


def images_to_tensor(images: np.ndarray) -> torch.Tensor:
    """uint8 (B,H,W) -> float32 (B,1,H,W); ink maps high, background low."""
    arr = np.asarray(images)
    if arr.ndim == 2:
        arr = arr[None]
    x = 1.0 - arr.astype(np.float32) / 255.0
    return torch.from_numpy(x).unsqueeze(1)


def forward_log_probs(model: CRNN, image: np.ndarray) -> np.ndarray:
    """Single-image forward pass to a (T, K) log-distribution matrix."""
    model.eval()
    with torch.no_grad():
        out = model(images_to_tensor(image[None] if image.ndim == 2 else image))
    return out[0].double().numpy()


def predict_batch(model: CRNN, images: np.ndarray, alphabet: Alphabet) -> list[str]:
    model.eval()
    with torch.no_grad():
        out = model(images_to_tensor(images)).numpy()
    return [greedy_decode(out[i], alphabet) for i in range(out.shape[0])]


def predict(model: CRNN, image: np.ndarray, alphabet: Alphabet) -> str:
    return predict_batch(model, image[None], alphabet)[0]


class Trainer:
    """Owns the optimizer, scheduler, and the joint main+shortcut CTC loss.

    One Trainer per parameter set; training_step is the only writer.
    """

    def __init__(self, model: CRNN, train_config: TrainConfig, alphabet: Alphabet):
        if alphabet.size != model.config.alphabet_size:
            raise ValueError("alphabet size does not match model config")
        self.model = model
        self.config = train_config
        self.alphabet = alphabet
        self.optimizer = torch.optim.Adam(model.parameters(), lr=train_config.learning_rate)
        self.scheduler = torch.optim.lr_scheduler.MultiStepLR(
            self.optimizer,
            milestones=train_config.milestone_epochs(),
            gamma=train_config.scheduler_factor,
        )
        self.ctc_loss = nn.CTCLoss(blank=0, reduction="mean", zero_infinity=False)
        self.epoch = 0

    @property
    def learning_rate(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def _encode_targets(self, texts, ids, frames):
        targets, lengths = [], []
        for text, sample_id in zip(texts, ids):
            need = required_frames(text)
            if need > frames:
                raise ValueError(
                    f"sample {sample_id}: transcript needs {need} frames, "
                    f"model emits {frames}"
                )
            seq = self.alphabet.encode(text)
            targets.extend(seq)
            lengths.append(len(seq))
        return (
            torch.tensor(targets, dtype=torch.long),
            torch.tensor(lengths, dtype=torch.long),
        )

    def training_step(self, images: np.ndarray, texts: list[str], ids: list[str]) -> float:
        """One Adam update on one batch; returns the joint loss value."""
        self.model.train()
        x = images_to_tensor(images)
        main, aux = self.model.forward_with_aux(x)
        b, t, _ = main.shape
        targets, target_lengths = self._encode_targets(texts, ids, t)
        input_lengths = torch.full((b,), t, dtype=torch.long)
        # CTCLoss wants (T, B, K)
        loss = self.ctc_loss(main.permute(1, 0, 2), targets, input_lengths, target_lengths)
        if self.model.config.aux_loss_weight > 0:
            aux_loss = self.ctc_loss(
                aux.permute(1, 0, 2), targets, input_lengths, target_lengths
            )
            loss = loss + self.model.config.aux_loss_weight * aux_loss
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite training loss at epoch {self.epoch}")
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        return float(loss.detach())

    def end_epoch(self) -> None:
        self.epoch += 1
        self.scheduler.step()


def save_checkpoint(
    path: str | Path,
    model: CRNN,
    alphabet: Alphabet,
    extra: dict | None = None,
) -> Path:
    """Self-describing checkpoint: version, config echo, tensor records."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(model.config),
        "alphabet": list(alphabet.symbols),
        "tensors": {
            name: {"shape": list(t.shape), "dtype": str(t.dtype)}
            for name, t in state.items()
        },
        "state_dict": state,
        "extra": extra or {},
    }
    torch.save(payload, path)
    return path


def load_checkpoint(
    path: str | Path,
    expected_config: ModelConfig | None = None,
) -> tuple[CRNN, Alphabet, dict]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    stored = payload["config"]
    stored["block_plan"] = tuple(tuple(p) for p in stored["block_plan"])
    config = ModelConfig(**stored)
    if expected_config is not None and config != expected_config:
        raise ValueError("checkpoint config does not match the expected config")
    state = payload["state_dict"]
    for name, rec in payload["tensors"].items():
        t = state.get(name)
        if t is None or list(t.shape) != rec["shape"] or str(t.dtype) != rec["dtype"]:
            raise ValueError(f"checkpoint tensor record mismatch for {name!r}")
    model = CRNN(config)
    model.load_state_dict(state)
    model.eval()
    alphabet = Alphabet(tuple(payload["alphabet"]))
    return model, alphabet, payload.get("extra", {})
