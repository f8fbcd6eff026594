"""Gradient-descent training of the reward model on assessed pools."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from ..assessment import PoolAssessment
from ..core import CandidatePool, ConversationSession
from ..errors import ConfigError, TrainingError
from .encoder import EncoderConfig, encode_matrix
from .model import RewardModel, init_model, pool_loss_and_gradient, ranking_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    margin: float = 0.1
    learning_rate: float = 1e-2
    epochs: int = 10
    warmup_fraction: float = 0.1
    seed: int = 0
    hidden: int = 64
    optimizer: str = "sgd"  # "sgd" or "adamw"
    weight_decay: float = 0.01  # adamw only
    accumulate: str = "pool"  # one step per "pool", or one per "epoch"

    def __post_init__(self) -> None:
        if not self.margin > 0:
            raise ConfigError(f"margin must be > 0, got {self.margin}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ConfigError(f"warmup_fraction must lie in [0, 1], got {self.warmup_fraction}")
        if self.hidden < 1:
            raise ConfigError("hidden must be positive")
        if self.optimizer not in ("sgd", "adamw"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.accumulate not in ("pool", "epoch"):
            raise ConfigError(f"accumulate must be 'pool' or 'epoch', got {self.accumulate!r}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "TrainingConfig":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training settings {sorted(unknown)}")
        return cls(**obj)


def lr_multiplier(step: int, total_steps: int, warmup_fraction: float) -> float:
    """Linear warmup then cosine decay to zero."""
    warmup = int(round(warmup_fraction * total_steps))
    if step < warmup:
        return step / max(1, warmup)
    progress = (step - warmup) / max(1, total_steps - warmup)
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def build_training_matrices(
    examples: Iterable[tuple[CandidatePool, PoolAssessment]],
    sessions: Iterable[ConversationSession] | Mapping,
    encoder_config: EncoderConfig,
) -> list:
    """Feature matrices per pool, rows in assigned-rank order, pools sorted by ref."""
    by_ref = sessions if isinstance(sessions, Mapping) else {s.ref: s for s in sessions}
    items = []
    for pool, assessment in examples:
        if pool.ref != assessment.ref:
            raise TrainingError(f"pool {pool.ref} paired with assessment {assessment.ref}")
        if sorted(r.candidate_index for r in assessment.records) != list(range(len(pool))):
            raise TrainingError(f"assessment for {pool.ref} does not cover its candidates")
        session = by_ref.get(pool.ref)
        if session is None:
            raise TrainingError(f"no session for pool {pool.ref}")
        order = assessment.rank_order()
        X = encode_matrix([pool.candidates[i] for i in order], session, encoder_config)
        items.append((pool.ref, X))
    items.sort(key=lambda kv: kv[0])
    return [X for _, X in items]


class _AdamW:
    def __init__(self, params: list[np.ndarray], weight_decay: float,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0
        self.wd, self.betas, self.eps = weight_decay, betas, eps

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2 = self.betas
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p *= 1 - lr * self.wd
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _dataset_loss(model: RewardModel, matrices: Sequence, margin: float) -> float:
    return float(sum(ranking_loss(model.score_matrix(X), margin) for X in matrices))


def train_on_matrices(
    matrices: Sequence,
    encoder_config: EncoderConfig,
    config: TrainingConfig,
) -> RewardModel:
    if not matrices:
        raise TrainingError("training set is empty")
    model = init_model(encoder_config, hidden=config.hidden, seed=config.seed)
    W1, b1, w2 = model.W1, model.b1, model.w2
    b2 = np.zeros(1)
    steps_per_epoch = len(matrices) if config.accumulate == "pool" else 1
    total_steps = steps_per_epoch * config.epochs
    shuffle_rng = np.random.default_rng([config.seed, 1])
    adam = _AdamW([W1, b1, w2, b2], config.weight_decay) if config.optimizer == "adamw" else None

    def apply(gW1, gb1, gw2, gb2, lr, cols=None):
        if adam is not None:
            full = np.zeros_like(W1)
            if cols is None:
                full[:] = gW1
            else:
                full[:, cols] = gW1
            adam.step([W1, b1, w2, b2], [full, gb1, gw2, np.array([gb2])], lr)
            return
        if cols is None:
            W1[...] -= lr * gW1
        else:
            W1[:, cols] -= lr * gW1
        b1[...] -= lr * gb1
        w2[...] -= lr * gw2
        b2[0] -= lr * gb2

    epoch_losses: list[float] = []
    step = 0
    for epoch in range(config.epochs):
        model.b2 = float(b2[0])
        if config.accumulate == "pool":
            for k in shuffle_rng.permutation(len(matrices)):
                X = matrices[k]
                lr = config.learning_rate * lr_multiplier(step, total_steps, config.warmup_fraction)
                step += 1
                if X.shape[0] < 2:
                    continue
                # only columns present in this pool receive gradient
                cols = np.unique(X.indices)
                sub = _SubModel(W1[:, cols], b1, w2, float(b2[0]))
                _, g = pool_loss_and_gradient(sub, X[:, cols], config.margin)
                apply(g.W1, g.b1, g.w2, g.b2, lr, cols)
        else:
            lr = config.learning_rate * lr_multiplier(step, total_steps, config.warmup_fraction)
            step += 1
            gW1 = np.zeros_like(W1)
            gb1 = np.zeros_like(b1)
            gw2 = np.zeros_like(w2)
            gb2 = 0.0
            for X in matrices:
                _, g = pool_loss_and_gradient(model, X, config.margin)
                gW1 += g.W1
                gb1 += g.b1
                gw2 += g.w2
                gb2 += g.b2
            apply(gW1, gb1, gw2, gb2, lr)
        model.b2 = float(b2[0])
        epoch_losses.append(_dataset_loss(model, matrices, config.margin))
        log.info("epoch %d/%d loss %.6f", epoch + 1, config.epochs, epoch_losses[-1])

    model.b2 = float(b2[0])
    final = model.with_flat_params(model.flat_params().astype(np.float32).astype(np.float64))
    final.metadata = {
        "seed": config.seed,
        "margin": config.margin,
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "warmup_fraction": config.warmup_fraction,
        "optimizer": config.optimizer,
        "accumulate": config.accumulate,
        "train_pools": len(matrices),
        "epoch_losses": epoch_losses,
    }
    return final


@dataclass
class _SubModel:
    """Column slice of a model, enough for :func:`pool_loss_and_gradient`."""

    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]


def train(
    examples: Iterable[tuple[CandidatePool, PoolAssessment]],
    sessions: Iterable[ConversationSession] | Mapping,
    config: TrainingConfig | None = None,
    encoder_config: EncoderConfig | None = None,
) -> RewardModel:
    """Fit a reward model to assessed pools.

    Deterministic for a given seed: pools are put in a canonical order
    before the seeded per-epoch shuffle. The loss after each epoch is kept
    in ``model.metadata["epoch_losses"]``.
    """
    config = config or TrainingConfig()
    encoder_config = encoder_config or EncoderConfig()
    examples = list(examples)
    if not examples:
        raise TrainingError("training set is empty")
    matrices = build_training_matrices(examples, sessions, encoder_config)
    return train_on_matrices(matrices, encoder_config, config)
