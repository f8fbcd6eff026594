"""Synthetic conversational-search benchmark with controlled candidate quality.

The world is a set of topics, each an invented two-word entity with a few
aspects ("climate", "economy", ...). Every (topic, aspect) pair is one
passage. A session talks about one topic; its current question names only
the aspect ("what about its economy?"), so the entity must come from the
history. Candidate outputs come in three kinds:

``good``   names the right entity and the asked-for aspect
``vague``  keeps the aspect but leaves the entity out
``wrong``  names a different entity from another topic

Good candidates retrieve the gold passage at or near the top; the others
mostly do not. Only the conversation history tells good from wrong.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ConversationSession, Turn, query_id, save_sessions
from .generation.clients import FixtureKey, save_fixtures
from .generation.parsing import format_output
from .retrieval import Passage
from .trec import Qrels, write_qrels

ASPECTS = (
    "population", "climate", "history", "economy", "cuisine", "architecture",
    "language", "religion", "geography", "transport", "education", "music",
    "sports", "literature", "wildlife", "agriculture", "industry", "tourism",
    "festivals", "government", "currency", "rivers", "mountains", "museums",
    "universities", "healthcare", "fashion", "cinema", "science", "trade",
)
_ONSETS = "b c d f g h j k l m n p r s t v z".split() + ["br", "dr", "kr", "st", "tr", "sh"]
_VOWELS = "a e i o u".split() + ["ai", "ou"]
KINDS = ("good", "vague", "wrong")


@dataclass
class SyntheticBenchmark:
    passages: list[Passage]
    sessions: list[ConversationSession]
    qrels: Qrels
    fixtures: dict[FixtureKey, str]
    kinds: dict[tuple[str, int], list[str]] = field(default_factory=dict)

    def split(self, train_fraction: float = 0.5):
        cut = int(round(train_fraction * len(self.sessions)))
        return self.sessions[:cut], self.sessions[cut:]


def _words(rng: np.random.Generator, count: int, syllables: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < count:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def make_benchmark(
    n_sessions: int = 400,
    n_topics: int = 250,
    aspects_per_topic: int = 4,
    n_candidates: int = 16,
    good_rate: tuple[float, float] = (0.1, 0.45),
    unparseable_rate: float = 0.0,
    seed: int = 0,
) -> SyntheticBenchmark:
    rng = np.random.default_rng(seed)
    taken: set[str] = set(ASPECTS)
    descriptors = {a: _words(rng, 3, 2, taken) for a in ASPECTS}
    fillers = _words(rng, 300, 2, taken)

    topics = []
    for _ in range(n_topics):
        first, last = _words(rng, 1, 2, taken)[0], _words(rng, 1, 3, taken)[0]
        aspects = [str(a) for a in rng.choice(ASPECTS, size=aspects_per_topic, replace=False)]
        topics.append({
            "entity": f"{first.capitalize()} {last.capitalize()}",
            "aspects": aspects,
            "words": _words(rng, 3, 3, taken),
        })

    passages, pid_of = [], {}
    for t, topic in enumerate(topics):
        ent = topic["entity"]
        for a in topic["aspects"]:
            pid = f"p{len(passages):05d}"
            pid_of[(t, a)] = pid
            fill = " ".join(rng.choice(fillers, size=8))
            text = (
                f"{ent} {a}. {ent} is known for its {a}: {' '.join(descriptors[a])}. "
                f"{' '.join(topic['words'])} {fill}."
            )
            passages.append(Passage(pid, text))

    sessions, qrels, fixtures, kinds = [], {}, {}, {}
    turn_probs = np.array([0.1, 0.35, 0.35, 0.2])[:aspects_per_topic]
    turn_probs = turn_probs / turn_probs.sum()
    for s in range(n_sessions):
        t = int(rng.integers(n_topics))
        topic = topics[t]
        ent = topic["entity"]
        k = int(rng.choice(np.arange(1, len(turn_probs) + 1), p=turn_probs))
        order = [str(a) for a in rng.permutation(topic["aspects"])]
        history = []
        for i, a in enumerate(order[: k - 1]):
            q = f"what is the {a} of {ent}?" if i == 0 else f"and what about its {a}?"
            r = f"{ent} is known for its {a}, for example {' '.join(descriptors[a][:2])}. {' '.join(topic['words'][:2])}."
            history.append(Turn(q, r))
        target = order[k - 1]
        current = f"what is the {target} of {ent}?" if k == 1 else f"what about its {target}?"
        session = ConversationSession(f"s{s:04d}", k, tuple(history), current)
        sessions.append(session)
        qrels[query_id(session.session_id, k)] = {pid_of[(t, target)]: 1}

        p_good = float(rng.uniform(*good_rate))
        p = np.array([p_good, (1 - p_good) / 2, (1 - p_good) / 2])
        pool_kinds = []
        for i in range(n_candidates):
            kind = str(rng.choice(KINDS, p=p))
            pool_kinds.append(kind)
            if kind == "wrong":
                other = (t + 1 + int(rng.integers(n_topics - 1))) % n_topics
                name = topics[other]["entity"]
            else:
                name = ent
            desc = " ".join(rng.choice(descriptors[target], size=2, replace=False))
            fill = " ".join(rng.choice(fillers, size=3))
            if kind == "vague":
                rewrite = f"what is the {target}?"
                response = f"The {target} is notable, with {desc} and {fill}."
            else:
                rewrite = f"what is the {target} of {name}?"
                response = f"{name} has a notable {target}, with {desc} and {fill}."
            raw = format_output(rewrite, response, reason=f"The user asks about the {target}.")
            if rng.random() < unparseable_rate:
                raw = "Sorry, I cannot help with that."
            fixtures[(session.session_id, k, i)] = raw
        kinds[session.ref] = pool_kinds
    return SyntheticBenchmark(passages, sessions, qrels, fixtures, kinds)


def write_benchmark(
    bench: SyntheticBenchmark, out_dir: str | Path, train_fraction: float = 0.5
) -> Path:
    """Write data files plus a ready-to-run ``config.json``; returns the config path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "passages.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for p in bench.passages:
            fh.write(json.dumps({"passage_id": p.passage_id, "text": p.text}) + "\n")
    train, test = bench.split(train_fraction)
    save_sessions(out / "sessions_train.jsonl", train)
    save_sessions(out / "sessions_test.jsonl", test)
    write_qrels(out / "qrels.txt", bench.qrels)
    save_fixtures(out / "fixtures.jsonl", bench.fixtures)
    n = len(next(iter(bench.kinds.values()))) if bench.kinds else 16
    config = {
        "data": {
            "passages": "passages.jsonl",
            "sessions_train": "sessions_train.jsonl",
            "sessions_test": "sessions_test.jsonl",
            "qrels": "qrels.txt",
            "fixtures": "fixtures.jsonl",
        },
        "output_dir": "run",
        "generation": {"n": n},
        "selection": {"strategies": ["first", "random", "oracle", "reward"], "budgets": [1, 2, 4, 8, n]},
    }
    path = out / "config.json"
    path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return path
