"""Data ingestion and synthetic task generation.

File formats (all plain text, UTF-8):

* embeddings: one ``word f1 ... fv`` line per vector, space separated.
* classification data: ``label,label,...<TAB>token token ...`` per line.
* QA data: ``question_id<TAB>relevance<TAB>question tokens<TAB>answer
  tokens`` per line, relevance in {0, 1}.

Unknown tokens map to a dedicated all-zero out-of-vocabulary row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass
class EmbeddingTable:
    """Word -> row lookup over a dense vector matrix with a trailing OOV row."""

    words: dict[str, int]
    vectors: np.ndarray  # (n_words + 1, dim); last row is the OOV zero row

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def oov_id(self) -> int:
        return len(self.words)

    def id_of(self, word: str) -> int:
        return self.words.get(word, self.oov_id)

    def ids(self, tokens: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.id_of(t) for t in tokens)

    def row(self, word: str) -> np.ndarray:
        return self.vectors[self.id_of(word)]

    def word_of(self, token_id: int) -> str:
        if not hasattr(self, "_inverse"):
            self._inverse = {i: w for w, i in self.words.items()}
        try:
            return self._inverse[token_id]
        except KeyError:
            raise ValueError(f"token id {token_id} has no word (OOV ids cannot be serialized)")


def load_embeddings(path: str) -> EmbeddingTable:
    """Parse a text-format vector file; dimension mismatches and bad floats
    are hard errors naming the offending line."""
    words: dict[str, int] = {}
    rows: list[list[float]] = []
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            word, comps = parts[0], parts[1:]
            if not comps:
                raise ValueError(f"{path}:{lineno}: no vector components for {word!r}")
            if dim is None:
                dim = len(comps)
            elif len(comps) != dim:
                raise ValueError(
                    f"{path}:{lineno}: expected {dim} components, found {len(comps)}"
                )
            try:
                vec = [float(x) for x in comps]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed float in vector for {word!r}")
            if word in words:
                raise ValueError(f"{path}:{lineno}: duplicate word {word!r}")
            words[word] = len(rows)
            rows.append(vec)
    if dim is None:
        raise ValueError(f"{path}: empty embedding file")
    vectors = np.vstack([np.asarray(rows, dtype=np.float64), np.zeros((1, dim))])
    return EmbeddingTable(words=words, vectors=vectors)


def write_embeddings(table: EmbeddingTable, path: str) -> None:
    inverse = sorted(table.words.items(), key=lambda kv: kv[1])
    with open(path, "w", encoding="utf-8") as f:
        for word, idx in inverse:
            comps = " ".join(repr(float(x)) for x in table.vectors[idx])
            f.write(f"{word} {comps}\n")


@dataclass(frozen=True)
class Document:
    """A classification record: token ids plus the set of true label ids."""

    token_ids: tuple[int, ...]
    labels: frozenset[int]


@dataclass(frozen=True)
class QaPair:
    """One judged question/answer pair; pairs sharing question_id form a group."""

    question_id: int
    relevant: bool
    question_ids: tuple[int, ...]
    answer_ids: tuple[int, ...]


def load_dataset(
    path: str,
    schema: str,
    table: EmbeddingTable,
    n_labels: int | None = None,
) -> list[Document] | list[QaPair]:
    """Read records in stable file order; malformed lines raise with the
    line number.  ``schema`` is "classification" or "qa"; classification
    requires ``n_labels`` so label ids can be range-checked."""
    if schema == "classification":
        if n_labels is None:
            raise ValueError("classification schema requires n_labels")
        return _load_classification(path, table, n_labels)
    if schema == "qa":
        return _load_qa(path, table)
    raise ValueError(f"unknown dataset schema {schema!r}")


def _load_classification(path: str, table: EmbeddingTable, n_labels: int) -> list[Document]:
    records: list[Document] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'labels<TAB>tokens'")
            try:
                labels = [int(x) for x in parts[0].split(",")]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed label list {parts[0]!r}")
            for lab in labels:
                if not 0 <= lab < n_labels:
                    raise ValueError(
                        f"{path}:{lineno}: label {lab} outside the {n_labels}-label space"
                    )
            tokens = parts[1].split()
            if not tokens:
                raise ValueError(f"{path}:{lineno}: empty token sequence")
            records.append(Document(token_ids=table.ids(tokens), labels=frozenset(labels)))
    return records


def _load_qa(path: str, table: EmbeddingTable) -> list[QaPair]:
    records: list[QaPair] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(
                    f"{path}:{lineno}: expected 'qid<TAB>relevance<TAB>question<TAB>answer'"
                )
            try:
                qid = int(parts[0])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed question id {parts[0]!r}")
            if parts[1] not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: relevance flag must be 0 or 1")
            q_tokens, a_tokens = parts[2].split(), parts[3].split()
            if not q_tokens or not a_tokens:
                raise ValueError(f"{path}:{lineno}: empty token sequence")
            records.append(
                QaPair(
                    question_id=qid,
                    relevant=parts[1] == "1",
                    question_ids=table.ids(q_tokens),
                    answer_ids=table.ids(a_tokens),
                )
            )
    return records


def save_dataset(records: Sequence[Document] | Sequence[QaPair], path: str, table: EmbeddingTable) -> None:
    """Inverse of load_dataset for in-vocabulary records (round-trip safe)."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            if isinstance(rec, Document):
                labels = ",".join(str(x) for x in sorted(rec.labels))
                tokens = " ".join(table.word_of(i) for i in rec.token_ids)
                f.write(f"{labels}\t{tokens}\n")
            else:
                q = " ".join(table.word_of(i) for i in rec.question_ids)
                a = " ".join(table.word_of(i) for i in rec.answer_ids)
                f.write(f"{rec.question_id}\t{int(rec.relevant)}\t{q}\t{a}\n")


def doc_matrix(token_ids: Sequence[int], table: EmbeddingTable, max_len: int) -> np.ndarray:
    """Stack embedding rows, truncating then zero-padding to max_len rows."""
    ids = list(token_ids[:max_len])
    X = table.vectors[ids] if ids else np.zeros((0, table.dim))
    if len(ids) < max_len:
        X = np.concatenate([X, np.zeros((max_len - len(ids), table.dim))], axis=0)
    return X


# -- synthetic tasks -----------------------------------------------------------


@dataclass
class SynthTask:
    train: list[Document]
    test: list[Document]
    table: EmbeddingTable


@dataclass
class SynthQaTask:
    train: list[QaPair]
    test: list[QaPair]
    table: EmbeddingTable


def _signature_vocab(prefix: str, n_groups: int, sig_size: int, n_noise: int, dim: int, rng) -> EmbeddingTable:
    words: dict[str, int] = {}
    for g in range(n_groups):
        for t in range(sig_size):
            words[f"{prefix}{g}w{t}"] = len(words)
    for t in range(n_noise):
        words[f"noise{t}"] = len(words)
    vectors = rng.normal(size=(len(words), dim))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    return EmbeddingTable(words=words, vectors=np.vstack([vectors, np.zeros((1, dim))]))


def synth_multilabel(
    n_docs: int,
    n_labels: int,
    seed: int,
    *,
    embed_dim: int = 12,
    sig_size: int = 6,
    draws_per_label: int = 8,
    noise: float = 0.1,
    n_noise_words: int = 12,
    test_fraction: float = 0.25,
    train_fraction: float = 1.0,
    max_labels_per_doc: int = 3,
) -> SynthTask:
    """Deterministic multi-label corpus: each label owns a signature token
    set; documents sample 1..max_labels_per_doc labels and concatenate
    noisy signature tokens.  ``train_fraction`` keeps the leading
    ceil(f * n_train) training documents of the seed-shuffled split (the
    low-resource mode); the test split never changes with the fraction."""
    if n_labels < 2:
        raise ValueError("need at least two labels")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    table = _signature_vocab("lab", n_labels, sig_size, n_noise_words, embed_dim, rng)

    docs: list[Document] = []
    for _ in range(n_docs):
        n_lab = int(rng.integers(1, max_labels_per_doc + 1))
        labs = sorted(int(x) for x in rng.choice(n_labels, size=n_lab, replace=False))
        tokens: list[str] = []
        for lab in labs:
            picks = rng.integers(0, sig_size, size=draws_per_label)
            tokens.extend(f"lab{lab}w{int(t)}" for t in picks)
        n_noise = int(rng.binomial(len(tokens), noise))
        for _ in range(n_noise):
            pos = int(rng.integers(0, len(tokens) + 1))
            tokens.insert(pos, f"noise{int(rng.integers(0, n_noise_words))}")
        docs.append(Document(token_ids=table.ids(tokens), labels=frozenset(labs)))

    order = rng.permutation(n_docs)
    n_test = int(round(test_fraction * n_docs))
    test = [docs[i] for i in order[:n_test]]
    train_full = [docs[i] for i in order[n_test:]]
    n_keep = math.ceil(train_fraction * len(train_full))
    return SynthTask(train=train_full[:n_keep], test=test, table=table)


def synth_qa(
    n_questions: int,
    n_topics: int,
    seed: int,
    *,
    embed_dim: int = 12,
    sig_size: int = 8,
    question_len: int = 6,
    answer_len: int = 6,
    negatives_per_question: int = 4,
    noise: float = 0.05,
    n_noise_words: int = 12,
    test_fraction: float = 0.25,
) -> SynthQaTask:
    """Deterministic paraphrase-ranking corpus: each question and its one
    relevant answer draw tokens from the same topic signature; negatives
    draw from other topics.  The split is by question."""
    if n_topics < 2:
        raise ValueError("need at least two topics")
    if negatives_per_question < 1:
        raise ValueError("need at least one negative per question")
    rng = np.random.default_rng(seed)
    table = _signature_vocab("top", n_topics, sig_size, n_noise_words, embed_dim, rng)

    def sample_tokens(topic: int, length: int) -> list[str]:
        toks = [f"top{topic}w{int(t)}" for t in rng.integers(0, sig_size, size=length)]
        n_noise = int(rng.binomial(length, noise))
        for _ in range(n_noise):
            pos = int(rng.integers(0, len(toks) + 1))
            toks.insert(pos, f"noise{int(rng.integers(0, n_noise_words))}")
        return toks

    pairs: list[QaPair] = []
    for qid in range(n_questions):
        topic = int(rng.integers(0, n_topics))
        q_ids = table.ids(sample_tokens(topic, question_len))
        pairs.append(
            QaPair(qid, True, q_ids, table.ids(sample_tokens(topic, answer_len)))
        )
        for _ in range(negatives_per_question):
            wrong = int(rng.integers(0, n_topics - 1))
            if wrong >= topic:
                wrong += 1
            pairs.append(
                QaPair(qid, False, q_ids, table.ids(sample_tokens(wrong, answer_len)))
            )

    q_order = rng.permutation(n_questions)
    n_test = int(round(test_fraction * n_questions))
    test_qids = set(int(q) for q in q_order[:n_test])
    train = [p for p in pairs if p.question_id not in test_qids]
    test = [p for p in pairs if p.question_id in test_qids]
    return SynthQaTask(train=train, test=test, table=table)


def signature_baseline_ranking(doc: Document, table: EmbeddingTable, n_labels: int, sig_size: int) -> list[int]:
    """Trivial bag-of-signature classifier: rank labels by how many of the
    document's tokens belong to each label's signature set (oracle for the
    synthetic task's purity)."""
    counts = np.zeros(n_labels)
    for tid in doc.token_ids:
        if tid >= table.oov_id:
            continue
        word = table.word_of(tid)
        if word.startswith("lab"):
            lab = int(word[3 : word.index("w")])
            counts[lab] += 1
    order = np.lexsort((np.arange(n_labels), -counts))
    return [int(i) for i in order]
