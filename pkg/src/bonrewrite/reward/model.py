"""One-hidden-layer scorer and the pairwise margin ranking loss.

The scorer computes ``r = w2 . tanh(W1 x + b1) + b2``. Pools are passed as
feature matrices whose rows are already sorted by assigned rank (row 0 is the
best candidate), which is the order the loss expects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError, ModelInputError
from .encoder import EncodedPair, EncoderConfig


@dataclass
class RewardModel:
    encoder_config: EncoderConfig
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float = 0.0
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = float(self.b2)
        h, f = self.W1.shape
        if self.b1.shape != (h,) or self.w2.shape != (h,):
            raise ModelInputError("inconsistent parameter shapes")
        if f != self.encoder_config.input_dim:
            raise ModelInputError(
                f"W1 has {f} columns but the encoder produces {self.encoder_config.input_dim}"
            )

    @property
    def input_dim(self) -> int:
        return int(self.W1.shape[1])

    @property
    def hidden(self) -> int:
        return int(self.W1.shape[0])

    @property
    def param_count(self) -> int:
        return self.input_dim * self.hidden + 2 * self.hidden + 1

    def flat_params(self) -> np.ndarray:
        """Parameters in checkpoint order: W1 (row-major), b1, w2, b2."""
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    def with_flat_params(self, flat: np.ndarray) -> "RewardModel":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.param_count,):
            raise ModelInputError(f"expected {self.param_count} parameters, got {flat.shape}")
        h, f = self.hidden, self.input_dim
        return RewardModel(
            encoder_config=self.encoder_config,
            W1=flat[: h * f].reshape(h, f).copy(),
            b1=flat[h * f : h * f + h].copy(),
            w2=flat[h * f + h : h * f + 2 * h].copy(),
            b2=float(flat[-1]),
            metadata=dict(self.metadata),
        )

    def score_matrix(self, X) -> np.ndarray:
        """Scores for every row of a dense or sparse feature matrix."""
        if X.shape[1] != self.input_dim:
            raise ModelInputError(
                f"feature dimension {X.shape[1]} does not match model input {self.input_dim}"
            )
        hidden = np.tanh(np.asarray(X @ self.W1.T) + self.b1)
        return hidden @ self.w2 + self.b2


def init_model(encoder_config: EncoderConfig, hidden: int = 64, seed: int = 0) -> RewardModel:
    """W1 ~ U(-1/sqrt(F), 1/sqrt(F)); every other parameter starts at zero.

    Values are rounded to float32 so a checkpoint of the initial model is exact.
    """
    f = encoder_config.input_dim
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(f)
    W1 = rng.uniform(-bound, bound, size=(hidden, f)).astype(np.float32).astype(np.float64)
    return RewardModel(encoder_config, W1, np.zeros(hidden), np.zeros(hidden), 0.0)


def score(model: RewardModel, pair: EncodedPair) -> float:
    x = np.asarray(pair.feature_vector, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.input_dim:
        raise ModelInputError(
            f"pair has dimension {x.shape[0] if x.ndim == 1 else x.shape}, "
            f"model expects {model.input_dim}"
        )
    return float(model.w2 @ np.tanh(model.W1 @ x + model.b1) + model.b2)


def _check_margin(margin: float) -> None:
    if not margin > 0:
        raise ConfigError(f"margin must be > 0, got {margin}")


def _hinge_terms(scores: np.ndarray, margin: float) -> np.ndarray:
    """Upper-triangular matrix of ``r_j - r_i + (j - i) * margin`` for i < j."""
    n = scores.shape[0]
    idx = np.arange(n)
    gap = idx[None, :] - idx[:, None]
    terms = scores[None, :] - scores[:, None] + gap * margin
    return np.where(gap > 0, terms, 0.0)


def ranking_loss(scores: Sequence[float], margin: float) -> float:
    """Sum over i < j of ``max(0, r_j - r_i + (j - i) * margin)``.

    ``scores`` must be listed best-ranked first.
    """
    _check_margin(margin)
    s = np.asarray(scores, dtype=np.float64)
    if s.size < 2:
        return 0.0
    return float(np.maximum(_hinge_terms(s, margin), 0.0).sum())


def score_gradient(scores: np.ndarray, margin: float) -> np.ndarray:
    """dL/dr for one pool; a hinge sitting exactly at zero contributes nothing."""
    active = (_hinge_terms(scores, margin) > 0).astype(np.float64)
    # term (i, j) is +r_j - r_i
    return active.sum(axis=0) - active.sum(axis=1)


@dataclass
class RewardGradient:
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])


def _as_matrix(pool) -> np.ndarray | sp.spmatrix:
    if sp.issparse(pool):
        return pool.tocsr()
    if isinstance(pool, np.ndarray):
        return pool
    return np.vstack([p.feature_vector if isinstance(p, EncodedPair) else p for p in pool])


def pool_loss_and_gradient(
    model: RewardModel, X, margin: float
) -> tuple[float, RewardGradient]:
    h, f = model.hidden, model.input_dim
    if X.shape[0] < 2:
        return 0.0, RewardGradient(np.zeros((h, f)), np.zeros(h), np.zeros(h), 0.0)
    if X.shape[1] != f:
        raise ModelInputError(f"feature dimension {X.shape[1]} does not match model input {f}")
    hidden = np.tanh(np.asarray(X @ model.W1.T) + model.b1)
    r = hidden @ model.w2 + model.b2
    loss = float(np.maximum(_hinge_terms(r, margin), 0.0).sum())
    c = score_gradient(r, margin)
    g_w2 = hidden.T @ c
    g_b2 = float(c.sum())
    dz = np.outer(c, model.w2) * (1.0 - hidden * hidden)
    g_b1 = dz.sum(axis=0)
    g_W1 = np.asarray(X.T @ dz).T if sp.issparse(X) else dz.T @ X
    return loss, RewardGradient(g_W1, g_b1, g_w2, g_b2)


def loss_gradient(model: RewardModel, pools: Sequence, margin: float) -> RewardGradient:
    """Exact subgradient of the summed ranking loss over ``pools``.

    Each pool is a sequence of :class:`EncodedPair` (or a feature matrix) in
    assigned-rank order. Pools are accumulated in the order given.
    """
    _check_margin(margin)
    h, f = model.hidden, model.input_dim
    total = RewardGradient(np.zeros((h, f)), np.zeros(h), np.zeros(h), 0.0)
    for pool in pools:
        _, g = pool_loss_and_gradient(model, _as_matrix(pool), margin)
        total.W1 += g.W1
        total.b1 += g.b1
        total.w2 += g.w2
        total.b2 += g.b2
    return total


def total_loss(model: RewardModel, pools: Sequence, margin: float) -> float:
    _check_margin(margin)
    return float(sum(ranking_loss(model.score_matrix(_as_matrix(p)), margin) for p in pools))
