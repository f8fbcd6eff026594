"""Embedded sparse (BM25) and exact dense retrieval.

Both backends rank ties by ascending passage id so results are fully
deterministic. Dense retrieval works on externally supplied vectors; the
:class:`HashingEmbedder` is a self-contained stand-in for a neural query
encoder so the pipeline can run end to end offline.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .core import GoldLabel, analyze, read_jsonl
from .errors import (
    DimensionError,
    EmptyIndexError,
    IndexingError,
    PassageNotFoundError,
    SchemaError,
)

NOT_FOUND = None
DEFAULT_DEPTH = 100


@dataclass(frozen=True)
class Passage:
    passage_id: str
    text: str


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self) -> None:
        if not self.k1 > 0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must lie in [0, 1], got {self.b}")


QRECC_BM25 = Bm25Params(k1=0.82, b=0.68)
TOPIOCQA_BM25 = Bm25Params(k1=0.9, b=0.4)


@dataclass(frozen=True)
class RetrievalResult:
    entries: tuple[tuple[str, float], ...]
    depth: int

    @property
    def passage_ids(self) -> list[str]:
        return [pid for pid, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


# --------------------------------------------------------------------------
# Sparse


@dataclass
class SparseIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_count: int
    params: Bm25Params = field(default_factory=Bm25Params)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))

    def to_dict(self) -> dict:
        return {
            "format": "bm25-index",
            "version": 1,
            "params": {"k1": self.params.k1, "b": self.params.b},
            "doc_lengths": self.doc_lengths,
            "postings": {t: [[pid, tf] for pid, tf in plist] for t, plist in self.postings.items()},
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "SparseIndex":
        if obj.get("format") != "bm25-index":
            raise SchemaError("not a BM25 index file")
        doc_lengths = {str(k): int(v) for k, v in obj["doc_lengths"].items()}
        postings = {t: [(str(pid), int(tf)) for pid, tf in plist] for t, plist in obj["postings"].items()}
        n = len(doc_lengths)
        return cls(
            postings=postings,
            doc_lengths=doc_lengths,
            avg_doc_length=(sum(doc_lengths.values()) / n) if n else 0.0,
            doc_count=n,
            params=Bm25Params(**obj["params"]),
        )


def build_sparse_index(
    passages: Iterable[Passage], params: Bm25Params | None = None
) -> SparseIndex:
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for passage in passages:
        pid = passage.passage_id
        if pid in doc_lengths:
            raise IndexingError(f"duplicate passage_id {pid!r}")
        tokens = analyze(passage.text)
        doc_lengths[pid] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((pid, tf))
    n = len(doc_lengths)
    return SparseIndex(
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=(sum(doc_lengths.values()) / n) if n else 0.0,
        doc_count=n,
        params=params or Bm25Params(),
    )


def _term_weight(idf: float, tf: int, dl: int, avgdl: float, params: Bm25Params) -> float:
    norm = 1.0 - params.b + params.b * dl / avgdl if avgdl > 0 else 1.0
    return idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)


def bm25_score(index: SparseIndex, query_tokens: Sequence[str], passage_id: str) -> float:
    """BM25 score of one passage; repeated query tokens count repeatedly."""
    if passage_id not in index.doc_lengths:
        raise PassageNotFoundError(f"passage {passage_id!r} is not in the index")
    dl = index.doc_lengths[passage_id]
    score = 0.0
    for term in query_tokens:
        tf = next((f for pid, f in index.postings.get(term, ()) if pid == passage_id), 0)
        if tf:
            score += _term_weight(index.idf(term), tf, dl, index.avg_doc_length, index.params)
    return score


def search_sparse(index: SparseIndex, query: str, depth: int = DEFAULT_DEPTH) -> RetrievalResult:
    """Top-``depth`` passages sharing at least one term with ``query``."""
    if index.doc_count == 0:
        raise EmptyIndexError("cannot search an empty sparse index")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    scores: dict[str, float] = {}
    for term in analyze(query):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for pid, tf in plist:
            w = _term_weight(idf, tf, index.doc_lengths[pid], index.avg_doc_length, index.params)
            scores[pid] = scores.get(pid, 0.0) + w
    top = heapq.nsmallest(depth, scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return RetrievalResult(entries=tuple(top), depth=depth)


# --------------------------------------------------------------------------
# Dense


class DenseIndex:
    """Row matrix of passage vectors searched by exhaustive inner product."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise DimensionError(
                f"expected a ({len(ids)}, d) matrix, got shape {matrix.shape}"
            )
        if len(set(ids)) != len(ids):
            raise IndexingError("duplicate passage_id in dense index")
        if not np.all(np.isfinite(matrix)):
            raise IndexingError("dense vectors contain NaN or Inf components")
        self.ids = [str(i) for i in ids]
        self.matrix = matrix
        self.dimension = int(matrix.shape[1])
        # position of each row in ascending-id order, used as the tie-break key
        order = sorted(range(len(self.ids)), key=self.ids.__getitem__)
        self._id_rank = np.empty(len(self.ids), dtype=np.int64)
        self._id_rank[order] = np.arange(len(self.ids))

    @classmethod
    def from_mapping(cls, vectors: Mapping[str, Sequence[float]]) -> "DenseIndex":
        ids = list(vectors)
        if not ids:
            raise IndexingError("dense index needs at least one vector")
        dims = {len(vectors[i]) for i in ids}
        if len(dims) != 1:
            raise DimensionError(f"vectors have mixed dimensions {sorted(dims)}")
        return cls(ids, np.array([vectors[i] for i in ids], dtype=np.float32))

    @property
    def vectors(self) -> dict[str, np.ndarray]:
        return {pid: self.matrix[i] for i, pid in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)


def search_dense(index: DenseIndex, query_vector, depth: int = DEFAULT_DEPTH) -> RetrievalResult:
    q = np.asarray(query_vector, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != index.dimension:
        raise DimensionError(
            f"query dimension {q.shape[0] if q.ndim == 1 else q.shape} "
            f"does not match index dimension {index.dimension}"
        )
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    scores = index.matrix.astype(np.float64) @ q
    order = np.lexsort((index._id_rank, -scores))[:depth]
    return RetrievalResult(
        entries=tuple((index.ids[i], float(scores[i])) for i in order), depth=depth
    )


def gold_rank(result: RetrievalResult, gold: GoldLabel) -> int | None:
    for rank, (pid, _) in enumerate(result.entries, 1):
        if pid in gold.gold_passage_ids:
            return rank
    return NOT_FOUND


class QueryEmbedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Signed random projection of a bag of analyzed tokens.

    Each token maps to a fixed Gaussian vector seeded from a keyed hash of
    the token, so the embedding of a text is the (L2-normalised) sum of its
    token vectors. Stable across processes and platforms.
    """

    def __init__(self, dimension: int = 256, seed: int = 0):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.seed = seed
        self._token_vector = lru_cache(maxsize=200_000)(self._make_token_vector)

    def _make_token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(
            token.encode("utf-8"), digest_size=8, key=self.seed.to_bytes(8, "little", signed=True)
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        return rng.standard_normal(self.dimension)

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        for token, count in sorted(Counter(analyze(text)).items()):
            vec += count * self._token_vector(token)
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def embed_passages(self, passages: Iterable[Passage]) -> DenseIndex:
        plist = list(passages)
        matrix = np.array([self.embed(p.text) for p in plist], dtype=np.float32)
        return DenseIndex([p.passage_id for p in plist], matrix.reshape(len(plist), self.dimension))


# --------------------------------------------------------------------------
# File formats


def load_passages(path: str | Path) -> list[Passage]:
    """Read a TSV (``id<TAB>text``) or JSONL (``passage_id``/``text``) collection."""
    path = Path(path)
    out: list[Passage] = []
    if path.suffix == ".tsv":
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                pid, sep, text = line.partition("\t")
                if not sep:
                    raise SchemaError(f"{path}:{lineno}: expected 'passage_id<TAB>text'")
                out.append(Passage(pid, text))
    else:
        for lineno, obj in enumerate(read_jsonl(path), 1):
            if "passage_id" not in obj or "text" not in obj:
                raise SchemaError(f"{path}:{lineno}: passage needs 'passage_id' and 'text'")
            out.append(Passage(str(obj["passage_id"]), str(obj["text"])))
    return out


def save_sparse_index(path: str | Path, index: SparseIndex) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(index.to_dict(), fh, ensure_ascii=False)


def load_sparse_index(path: str | Path) -> SparseIndex:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid index JSON ({exc.msg})") from exc
    return SparseIndex.from_dict(obj)


def write_dense_vectors(path: str | Path, index: DenseIndex) -> None:
    """Header line ``{"dimension","count","ids"}`` then row-major float32 LE."""
    header = {"dimension": index.dimension, "count": len(index), "ids": index.ids}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, ensure_ascii=False).encode("utf-8") + b"\n")
        fh.write(index.matrix.astype("<f4").tobytes(order="C"))


def read_dense_vectors(path: str | Path) -> DenseIndex:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise SchemaError(f"{path}: missing JSON header line")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
        dim, count, ids = int(header["dimension"]), int(header["count"]), list(header["ids"])
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: bad vector header ({exc})") from exc
    if len(ids) != count:
        raise SchemaError(f"{path}: header count {count} but {len(ids)} ids")
    body = data[nl + 1 :]
    if len(body) != 4 * dim * count:
        raise SchemaError(
            f"{path}: expected {4 * dim * count} bytes of vectors, found {len(body)}"
        )
    matrix = np.frombuffer(body, dtype="<f4").reshape(count, dim)
    return DenseIndex(ids, matrix)
