"""Independent reference implementations used to check the package.

Nothing here imports the code paths under test: BM25 is recomputed from raw
token counts, dense ranking from per-vector dot products, metrics from their
textbook definitions, and gradients by central finite differences.
"""

import math
import re
from collections import Counter

import numpy as np


def tokens(text):
    return re.findall(r"[^\W_]+", text.lower())


class BruteBm25:
    """Scores every document for every query straight from token counts."""

    def __init__(self, docs, k1, b):
        self.k1, self.b = k1, b
        self.tf = {pid: Counter(tokens(t)) for pid, t in docs.items()}
        self.dl = {pid: sum(c.values()) for pid, c in self.tf.items()}
        self.n = len(docs)
        self.avgdl = sum(self.dl.values()) / self.n
        self.df = Counter()
        for c in self.tf.values():
            self.df.update(c.keys())

    def rank(self, query, depth):
        q = tokens(query)
        scored = []
        for pid, tf in self.tf.items():
            s = 0.0
            hit = False
            for term in q:
                if tf[term] == 0:
                    continue
                hit = True
                idf = math.log(1.0 + (self.n - self.df[term] + 0.5) / (self.df[term] + 0.5))
                norm = 1.0 - self.b + self.b * self.dl[pid] / self.avgdl
                s += idf * tf[term] * (self.k1 + 1.0) / (tf[term] + self.k1 * norm)
            if hit:
                scored.append((pid, s))
        scored.sort(key=lambda kv: (-kv[1], kv[0]))
        return [pid for pid, _ in scored[:depth]]


def brute_bm25_ranking(docs, query, k1, b, depth):
    """docs: dict id -> text. Full scoring of every document, no postings."""
    return BruteBm25(docs, k1, b).rank(query, depth)


def brute_dense_ranking(vectors, query, depth):
    """vectors: dict id -> float32 array."""
    scored = [(pid, float(np.dot(v.astype(np.float64), np.asarray(query, dtype=np.float64))))
              for pid, v in vectors.items()]
    scored.sort(key=lambda kv: (-kv[1], kv[0]))
    return [pid for pid, _ in scored[:depth]]


def naive_rr(ranked_ids, judged, threshold=1):
    for i in range(len(ranked_ids)):
        if judged.get(ranked_ids[i], 0) >= threshold:
            return 1.0 / (i + 1)
    return 0.0


def naive_ndcg(ranked_ids, judged, k):
    dcg = 0.0
    for i in range(min(k, len(ranked_ids))):
        dcg += judged.get(ranked_ids[i], 0) / math.log2(i + 2)
    ideal = sorted([g for g in judged.values() if g > 0], reverse=True)
    idcg = 0.0
    for i in range(min(k, len(ideal))):
        idcg += ideal[i] / math.log2(i + 2)
    return dcg / idcg if idcg > 0 else 0.0


def naive_recall(ranked_ids, judged, k, threshold=1):
    rel = [p for p, g in judged.items() if g >= threshold]
    if not rel:
        return None
    top = ranked_ids[:k]
    return sum(1 for p in rel if p in top) / len(rel)


def naive_loss(scores, margin):
    total = 0.0
    for i in range(len(scores)):
        for j in range(i + 1, len(scores)):
            total += max(0.0, scores[j] - scores[i] + (j - i) * margin)
    return total


def mlp_scores(flat, X, hidden):
    """Forward pass of the scorer written directly from its formula."""
    f = X.shape[1]
    W1 = flat[: hidden * f].reshape(hidden, f)
    b1 = flat[hidden * f : hidden * f + hidden]
    w2 = flat[hidden * f + hidden : hidden * f + 2 * hidden]
    b2 = flat[-1]
    return np.array([w2 @ np.tanh(W1 @ x + b1) + b2 for x in X])


def finite_difference_grad(flat, pools, hidden, margin, h=1e-5):
    def loss(theta):
        return sum(naive_loss(list(mlp_scores(theta, X, hidden)), margin) for X in pools)

    grad = np.zeros_like(flat)
    for k in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[k] += h
        down[k] -= h
        grad[k] = (loss(up) - loss(down)) / (2 * h)
    return grad
