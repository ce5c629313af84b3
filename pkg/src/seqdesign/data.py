"""Vocabulary, tokenization, corpus ingestion, and ranked seed selection.

Corpus format: UTF-8 text, one sequence per line, whitespace-separated
tokens. Properties live in an optional JSON-lines sidecar with records
{"seq_index": int, "y": [floats]}. The vocabulary serializes as a flat
JSON {token: id} map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
RESERVED = {"<pad>": PAD_ID, "<bos>": BOS_ID, "<eos>": EOS_ID}
N_RESERVED = 3


class CorpusError(ValueError):
    pass


class UnknownTokenError(KeyError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    token_to_id: dict[str, int]
    id_to_token: dict[int, str]

    @property
    def size(self) -> int:
        return N_RESERVED + len(self.token_to_id)

    @property
    def n_effective(self) -> int:
        """Tokens the generator may actually emit: content tokens + EOS."""
        return len(self.token_to_id) + 1

    def to_json(self) -> str:
        full = dict(RESERVED)
        full.update(self.token_to_id)
        return json.dumps(full, indent=0, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Vocabulary":
        full = json.loads(text)
        t2i = {t: i for t, i in full.items() if t not in RESERVED}
        return Vocabulary(token_to_id=t2i, id_to_token={i: t for t, i in t2i.items()})


def build_vocab(corpus_path: str | Path) -> Vocabulary:
    """Vocabulary over every token in the corpus; ids assigned
    lexicographically starting after the reserved ids."""
    tokens: set[str] = set()
    n_lines = 0
    with open(corpus_path, encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if parts:
                n_lines += 1
                tokens.update(parts)
    if not tokens:
        raise CorpusError(f"empty corpus: {corpus_path}")
    t2i = {tok: N_RESERVED + i for i, tok in enumerate(sorted(tokens))}
    return Vocabulary(token_to_id=t2i, id_to_token={i: t for t, i in t2i.items()})


def encode(text: str, vocab: Vocabulary, max_len: int | None = None) -> tuple[int, ...]:
    """Token string -> id tuple with terminal EOS appended.

    Over-long lines are rejected, never truncated.
    """
    ids = []
    for tok in text.split():
        try:
            ids.append(vocab.token_to_id[tok])
        except KeyError:
            raise UnknownTokenError(f"unknown token {tok!r}") from None
    if max_len is not None and len(ids) > max_len:
        raise CorpusError(f"sequence length {len(ids)} exceeds max_len {max_len}")
    ids.append(EOS_ID)
    return tuple(ids)


def decode(seq, vocab: Vocabulary) -> str:
    """Id sequence -> token string; a terminal EOS is dropped."""
    ids = list(seq)
    if ids and ids[-1] == EOS_ID:
        ids = ids[:-1]
    out = []
    for i in ids:
        if i in (PAD_ID, BOS_ID, EOS_ID):
            raise UnknownTokenError(f"reserved id {i} inside sequence")
        try:
            out.append(vocab.id_to_token[i])
        except KeyError:
            raise UnknownTokenError(f"unknown id {i}") from None
    return " ".join(out)


def content_length(seq) -> int:
    ids = list(seq)
    return len(ids) - 1 if ids and ids[-1] == EOS_ID else len(ids)


@dataclass
class PropertyRecord:
    x: tuple[int, ...]
    y: np.ndarray | None = None  # length-M float vector


@dataclass
class Corpus:
    records: list[PropertyRecord]
    vocab: Vocabulary
    path: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def annotated(self) -> list[int]:
        return [i for i, r in enumerate(self.records) if r.y is not None]


def load_corpus(corpus_path: str | Path, vocab: Vocabulary | None = None,
                max_len: int | None = None,
                props_path: str | Path | None = None) -> Corpus:
    if vocab is None:
        vocab = build_vocab(corpus_path)
    records = []
    with open(corpus_path, encoding="utf-8") as f:
        for line in f:
            if line.split():
                records.append(PropertyRecord(x=encode(line, vocab, max_len)))
    if not records:
        raise CorpusError(f"empty corpus: {corpus_path}")
    if props_path is not None:
        with open(props_path, encoding="utf-8") as f:
            for ln, line in enumerate(f):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    idx = int(rec["seq_index"])
                    y = np.asarray(rec["y"], dtype=np.float64)
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise CorpusError(f"bad property record at line {ln}: {e}") from None
                if not 0 <= idx < len(records):
                    raise CorpusError(f"seq_index {idx} out of range")
                if not np.all(np.isfinite(y)):
                    raise CorpusError(f"non-finite property for seq_index {idx}")
                records[idx].y = y
    return Corpus(records=records, vocab=vocab, path=str(corpus_path))


@dataclass(frozen=True)
class RankSpec:
    """Total order used everywhere a set of scored sequences is ranked.

    Maximization of y[objective]; records failing the constraint rank
    strictly below every satisfier. Ties break by earlier insertion
    order, then lexicographic token ids.
    """

    objective: int = 0
    constraint_index: int | None = None
    threshold: float = 0.0
    direction: str = "ge"  # constraint satisfied when aux >= ("ge") / <= ("le") threshold

    def satisfies(self, y: np.ndarray) -> bool:
        if self.constraint_index is None:
            return True
        v = float(y[self.constraint_index])
        return v >= self.threshold if self.direction == "ge" else v <= self.threshold


def rank_order(items: list[tuple[tuple[int, ...], np.ndarray]],
               spec: RankSpec) -> list[int]:
    """Indices of items sorted best-first under the RankSpec total order."""
    def key(i):
        x, y = items[i]
        return (not spec.satisfies(y), -float(y[spec.objective]), i, x)
    return sorted(range(len(items)), key=key)


def top_n_seed(corpus: Corpus, n: int, spec: RankSpec | None = None
               ) -> list[tuple[int, tuple[int, ...], np.ndarray]]:
    """Top-n annotated records as (corpus_index, x, y), best first."""
    spec = spec or RankSpec()
    annotated = [(i, corpus.records[i]) for i in corpus.annotated]
    if len(annotated) < n:
        raise CorpusError(f"need {n} annotated records, have {len(annotated)}")
    items = [(r.x, r.y) for _, r in annotated]
    order = rank_order(items, spec)[:n]
    return [(annotated[j][0], annotated[j][1].x, annotated[j][1].y) for j in order]
