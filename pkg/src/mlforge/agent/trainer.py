"""Deterministic simulated trainer.

Learning progress ``s`` accumulates per hyperparameter segment as
``lr * steps_in_segment`` and the loss follows the closed form
``loss = l0 / (1 + s)``. Progress is computed from exact per-segment
products, so resuming from any split point and tuning mid-run reproduce
the analytic values bit-for-bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from mlforge.canonical import canonical_json, digest64

CHECKPOINT_FORMAT_V1 = 0x01

REQUIRED_HYPERPARAMS = ("lr", "l0")

CONFIDENCE_FLOOR = 0.01


@dataclass
class SimTrainerState:
    """Resumable trainer state; a new segment opens whenever lr changes."""

    hyperparams: dict[str, float | str] = field(default_factory=lambda: {"lr": 0.1, "l0": 1.0})
    step: int = 0
    seed: int = 0
    segments: list[list[float]] | None = None  # [lr, steps_in_segment]

    def __post_init__(self):
        for key in REQUIRED_HYPERPARAMS:
            if key not in self.hyperparams:
                raise ValueError(f"hyperparams must include {key!r}")
        if self.step < 0:
            raise ValueError("step must be >= 0")
        if self.segments is None:
            self.segments = [[self.lr, self.step]]

    @property
    def lr(self) -> float:
        return float(self.hyperparams["lr"])

    @property
    def l0(self) -> float:
        return float(self.hyperparams["l0"])

    @property
    def s(self) -> float:
        return sum(lr * steps for lr, steps in self.segments)

    def loss(self) -> float:
        return self.l0 / (1.0 + self.s)

    def accuracy(self) -> float:
        return 1.0 - self.loss()

    def step_once(self) -> None:
        self.segments[-1][1] += 1
        self.step += 1

    def apply_hyperparams(self, new_hyperparams: dict) -> None:
        """Adopt new values; a changed lr starts a fresh progress segment."""
        self.hyperparams = dict(new_hyperparams)
        for key in REQUIRED_HYPERPARAMS:
            if key not in self.hyperparams:
                raise ValueError(f"hyperparams must include {key!r}")
        if self.segments[-1][0] != self.lr:
            self.segments.append([self.lr, 0])

    def copy(self) -> SimTrainerState:
        return SimTrainerState(
            hyperparams=dict(self.hyperparams),
            step=self.step,
            seed=self.seed,
            segments=[list(seg) for seg in self.segments],
        )

    def to_bytes(self) -> bytes:
        body = canonical_json(
            {
                "step": self.step,
                "s": self.s,
                "hyperparams": self.hyperparams,
                "seed": self.seed,
                "segments": self.segments,
            }
        )
        return bytes([CHECKPOINT_FORMAT_V1]) + body

    @classmethod
    def from_bytes(cls, data: bytes) -> SimTrainerState:
        if not data or data[0] != CHECKPOINT_FORMAT_V1:
            raise ValueError("unsupported checkpoint format")
        payload = json.loads(data[1:].decode("utf-8"))
        return cls(
            hyperparams=payload["hyperparams"],
            step=payload["step"],
            seed=payload["seed"],
            segments=[list(seg) for seg in payload["segments"]],
        )


def infer(state: SimTrainerState, input_bytes: bytes) -> tuple[int, float]:
    """Pure prediction from a checkpoint: better-trained models are more
    confident, and the label shifts deterministically with the input bytes."""
    loss = state.loss()
    quality = 1.0 - loss
    label = (digest64(input_bytes) + math.floor(100.0 * quality)) % 10
    confidence = min(1.0, max(CONFIDENCE_FLOOR, quality))
    return label, confidence
