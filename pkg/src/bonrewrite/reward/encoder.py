"""Hashed bag-of-ngrams encoding of a (candidate, session) pair.

Layout of the feature vector, for a per-block width ``F``::

    [0, F)        candidate standalone-query n-grams   (L2-normalised)
    [F, 2F)       session n-grams                      (L2-normalised)
    [2F, 2F + 3)  shared-token count, Jaccard, length ratio

The interaction block is left unnormalised so that each entry keeps its
meaning (a Jaccard of 1 reads as 1).
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from ..core import ConversationSession, ReformulationCandidate, analyze

SEP_TOKEN = "[sep]"
N_INTERACTION = 3


@dataclass(frozen=True)
class EncoderConfig:
    dimension: int = 4096
    ngram_orders: tuple[int, ...] = (1, 2)
    use_history: bool = True
    history_turns: int = 6
    candidate_weight: float = 1.0
    session_weight: float = 1.0
    interaction_weight: float = 1.0
    hash_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "ngram_orders", tuple(int(n) for n in self.ngram_orders))
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if not self.ngram_orders or min(self.ngram_orders) < 1:
            raise ValueError("ngram_orders must be positive integers")
        if self.history_turns < 0:
            raise ValueError("history_turns must be >= 0")

    @property
    def input_dim(self) -> int:
        return 2 * self.dimension + N_INTERACTION

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["ngram_orders"] = list(self.ngram_orders)
        return d

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "EncoderConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown encoder settings {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class EncodedPair:
    feature_vector: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return int(self.feature_vector.shape[0])


@lru_cache(maxsize=500_000)
def _bucket(gram: str, dimension: int, seed: int) -> int:
    digest = hashlib.blake2b(
        gram.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little", signed=True)
    ).digest()
    return int.from_bytes(digest, "little") % dimension


def session_tokens(session: ConversationSession, config: EncoderConfig) -> list[str]:
    """Flatten ``q1 [SEP] r1 [SEP] ... [SEP] qk`` over the most recent turns."""
    tokens: list[str] = []
    if config.use_history and config.history_turns > 0:
        for turn in session.history[-config.history_turns :]:
            for text in (turn.query, turn.response):
                if text:
                    tokens.extend(analyze(text))
                    tokens.append(SEP_TOKEN)
    tokens.extend(analyze(session.current_query))
    return tokens


def _ngrams(tokens: Sequence[str], orders: Sequence[int]) -> Counter:
    grams: Counter = Counter()
    for n in orders:
        for i in range(len(tokens) - n + 1):
            grams[" ".join(tokens[i : i + n])] += 1
    return grams


def _hashed_block(tokens: Sequence[str], config: EncoderConfig, weight: float) -> dict[int, float]:
    block: dict[int, float] = {}
    for gram, count in _ngrams(tokens, config.ngram_orders).items():
        j = _bucket(gram, config.dimension, config.hash_seed)
        block[j] = block.get(j, 0.0) + count
    norm = float(np.sqrt(sum(v * v for v in block.values())))
    if norm == 0.0:
        return {}
    return {j: weight * v / norm for j, v in block.items()}


def interaction_features(cand_tokens: Sequence[str], sess_tokens: Sequence[str]) -> list[float]:
    cset = set(cand_tokens)
    sset = set(t for t in sess_tokens if t != SEP_TOKEN)
    shared = len(cset & sset)
    union = len(cset | sset)
    n_sess = sum(1 for t in sess_tokens if t != SEP_TOKEN)
    return [
        float(shared),
        shared / union if union else 0.0,
        len(cand_tokens) / n_sess if n_sess else 0.0,
    ]


def _sparse_row(
    candidate: ReformulationCandidate, session: ConversationSession, config: EncoderConfig
) -> tuple[list[int], list[float]]:
    cand = analyze(candidate.standalone_query)
    sess = session_tokens(session, config)
    row: dict[int, float] = dict(_hashed_block(cand, config, config.candidate_weight))
    for j, v in _hashed_block(sess, config, config.session_weight).items():
        row[config.dimension + j] = v
    base = 2 * config.dimension
    for k, v in enumerate(interaction_features(cand, sess)):
        if v:
            row[base + k] = config.interaction_weight * v
    cols = sorted(row)
    return cols, [row[c] for c in cols]


def encode(
    candidate: ReformulationCandidate, session: ConversationSession, config: EncoderConfig
) -> EncodedPair:
    cols, vals = _sparse_row(candidate, session, config)
    x = np.zeros(config.input_dim)
    x[cols] = vals
    return EncodedPair(x)


def encode_matrix(
    candidates: Sequence[ReformulationCandidate],
    session: ConversationSession,
    config: EncoderConfig,
) -> sp.csr_matrix:
    """Encode several candidates of one session as CSR rows, in the given order."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for cand in candidates:
        cols, vals = _sparse_row(cand, session, config)
        indices.extend(cols)
        data.extend(vals)
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
        shape=(len(candidates), config.input_dim),
    )
