"""Sparse bag-of-words corpora.

Vocabulary indexing, UCI-style sparse file ingestion, document length
truncation, and uniform minibatch sampling. Term ids are 1-based on disk and
0-based in memory. Vocabulary and Corpus are immutable after construction and
safe to share across threads; all randomized operations take explicit streams.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream


class CorpusFormatError(ValueError):
    """A corpus or vocabulary file violates the expected format."""


@dataclass(frozen=True)
class Vocabulary:
    """Ordered term list with its inverse index.

    ``index[term] == position of term in terms``; terms are unique and there
    are at least two of them.
    """

    terms: tuple[str, ...]
    index: dict[str, int] = field(repr=False)

    def __post_init__(self):
        if len(self.terms) < 2:
            if not self.terms:
                raise ValueError("empty vocabulary")
            raise ValueError("vocabulary needs at least 2 terms, got 1")
        if len(self.index) != len(self.terms):
            raise ValueError("vocabulary terms are not unique")
        for i, t in enumerate(self.terms):
            if self.index.get(t) != i:
                raise ValueError(f"index does not invert terms at position {i}")

    def __len__(self) -> int:
        return len(self.terms)


def build_vocabulary(raw_terms) -> Vocabulary:
    """Build a Vocabulary from terms, deduplicating but preserving first
    occurrence order."""
    index: dict[str, int] = {}
    terms: list[str] = []
    for t in raw_terms:
        if t not in index:
            index[t] = len(terms)
            terms.append(t)
    if not terms:
        raise ValueError("empty vocabulary")
    return Vocabulary(tuple(terms), index)


class Document:
    """A bag of words: sorted distinct term ids with positive counts."""

    __slots__ = ("term_ids", "counts", "total_words")

    def __init__(self, term_ids, counts):
        term_ids = np.asarray(term_ids, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if term_ids.ndim != 1 or counts.shape != term_ids.shape:
            raise ValueError("term_ids and counts must be 1-D and equal length")
        if term_ids.size == 0:
            raise ValueError("document has no words")
        if np.any(counts < 1):
            raise ValueError("counts must be >= 1")
        if term_ids[0] < 0 or np.any(np.diff(term_ids) <= 0):
            raise ValueError("term_ids must be nonnegative and strictly increasing")
        term_ids.setflags(write=False)
        counts.setflags(write=False)
        self.term_ids = term_ids
        self.counts = counts
        self.total_words = int(counts.sum())

    @property
    def entries(self) -> list[tuple[int, int]]:
        return list(zip(self.term_ids.tolist(), self.counts.tolist()))

    def sort_key(self) -> bytes:
        """Content-based ordering key (used for canonical reductions)."""
        return self.term_ids.tobytes() + self.counts.tobytes()

    def __eq__(self, other):
        return (
            isinstance(other, Document)
            and np.array_equal(self.term_ids, other.term_ids)
            and np.array_equal(self.counts, other.counts)
        )

    def __hash__(self):
        return hash(self.sort_key())

    def __repr__(self):
        return f"Document({self.entries!r})"


@dataclass(frozen=True)
class Corpus:
    """An ordered collection of documents over a fixed term space of size
    ``n_terms``."""

    documents: list[Document]
    n_terms: int

    def __post_init__(self):
        if not self.documents:
            raise ValueError("empty corpus")
        if self.n_terms < 2:
            raise ValueError("corpus needs a term space of size >= 2")
        for d, doc in enumerate(self.documents):
            if doc.term_ids[-1] >= self.n_terms:
                raise CorpusFormatError(f"document {d + 1}: term out of range")

    @property
    def doc_count(self) -> int:
        return len(self.documents)

    def total_word_count(self) -> int:
        return sum(doc.total_words for doc in self.documents)


@dataclass(frozen=True)
class MinibatchSpec:
    """Uniform without-replacement sampling plan.

    ``sampling_ratio`` is exactly batch_size / doc_count of the corpus the
    spec was built for.
    """

    batch_size: int
    sampling_ratio: float
    seed: int

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.sampling_ratio <= 1.0:
            raise ValueError("sampling_ratio must be in (0, 1]")

    @classmethod
    def for_corpus(cls, corpus: Corpus, batch_size: int, seed: int) -> "MinibatchSpec":
        return cls(batch_size, batch_size / corpus.doc_count, seed)


def sample_indices(doc_count: int, spec: MinibatchSpec, iteration: int) -> np.ndarray:
    """Sample ``spec.batch_size`` distinct document indices uniformly.

    Deterministic given (spec.seed, iteration).
    """
    if spec.batch_size > doc_count:
        raise ValueError(
            f"batch_size {spec.batch_size} exceeds corpus size {doc_count}"
        )
    rng = substream(spec.seed, "batch", iteration)
    return rng.choice(doc_count, size=spec.batch_size, replace=False)


def sample_minibatch(corpus: Corpus, spec: MinibatchSpec, iteration: int) -> list[Document]:
    """Sample a uniform without-replacement minibatch of documents."""
    idx = sample_indices(corpus.doc_count, spec, iteration)
    return [corpus.documents[i] for i in idx]


def truncate_document(doc: Document, max_len: int, rng: np.random.Generator) -> Document:
    """Cap a document at ``max_len`` word tokens.

    Documents at or under the cap are returned unchanged; longer documents
    keep a uniform without-replacement sample of ``max_len`` tokens from the
    expanded token multiset. Deterministic given ``rng``.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if doc.total_words <= max_len:
        return doc
    tokens = np.repeat(doc.term_ids, doc.counts)
    keep = rng.choice(tokens.shape[0], size=max_len, replace=False)
    ids, counts = np.unique(tokens[keep], return_counts=True)
    return Document(ids, counts)


# ---------------------------------------------------------------------------
# File formats.
#
# Vocabulary: UTF-8, one term per line; line number - 1 = term id.
# Corpus: three header lines (doc count D, term count V, entry count NNZ)
# followed by NNZ lines "docId termId count" with 1-based ids.
# ---------------------------------------------------------------------------


def load_vocabulary(path) -> Vocabulary:
    index: dict[str, int] = {}
    terms: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            term = line.strip()
            if not term:
                raise CorpusFormatError(f"{path}, line {lineno}: empty term")
            if term in index:
                raise CorpusFormatError(f"{path}, line {lineno}: duplicate term {term!r}")
            index[term] = len(terms)
            terms.append(term)
    if not terms:
        raise CorpusFormatError(f"{path}: empty vocabulary")
    return Vocabulary(tuple(terms), index)


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for term in vocab.terms:
            fh.write(term + "\n")


def _parse_header_value(line: str, lineno: int, name: str) -> int:
    try:
        value = int(line.strip())
    except ValueError:
        raise CorpusFormatError(f"line {lineno}: expected integer {name}") from None
    if value < 0:
        raise CorpusFormatError(f"line {lineno}: {name} must be nonnegative")
    return value


def ingest_sparse(stream) -> Corpus:
    """Parse a sparse bag-of-words stream into a Corpus.

    ``stream`` is any iterable of text lines. Duplicate (doc, term) entries
    are summed; whitespace-only lines are ignored.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = iter(enumerate(stream, start=1))

    header: list[int] = []
    names = ("document count", "term count", "entry count")
    for lineno, line in lines:
        if not line.strip():
            continue
        header.append(_parse_header_value(line, lineno, names[len(header)]))
        if len(header) == 3:
            break
    if len(header) < 3:
        raise CorpusFormatError("truncated header: expected 3 lines (D, V, NNZ)")
    doc_count, n_terms, nnz = header
    if doc_count == 0 or nnz == 0:
        raise CorpusFormatError("empty corpus")

    per_doc: list[dict[int, int]] = [dict() for _ in range(doc_count)]
    seen = 0
    for lineno, line in lines:
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise CorpusFormatError(
                f"line {lineno}: expected 'docId termId count', got {line.strip()!r}"
            )
        try:
            d, t, c = (int(p) for p in parts)
        except ValueError:
            raise CorpusFormatError(
                f"line {lineno}: expected 'docId termId count', got {line.strip()!r}"
            ) from None
        if not 1 <= d <= doc_count:
            raise CorpusFormatError(f"line {lineno}: document id {d} out of range")
        if not 1 <= t <= n_terms:
            raise CorpusFormatError(f"line {lineno}: term out of range")
        if c < 1:
            raise CorpusFormatError(f"line {lineno}: count must be positive")
        counts = per_doc[d - 1]
        counts[t - 1] = counts.get(t - 1, 0) + c
        seen += 1
    if seen != nnz:
        raise CorpusFormatError(f"expected {nnz} entries, found {seen}")

    documents = []
    for d, counts in enumerate(per_doc, start=1):
        if not counts:
            raise CorpusFormatError(f"document {d} has no words")
        ids = sorted(counts)
        documents.append(Document(ids, [counts[i] for i in ids]))
    return Corpus(documents, n_terms)


def load_corpus(path) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return ingest_sparse(fh)


def peek_corpus_header(path) -> tuple[int, int, int]:
    """Read only the (D, V, NNZ) header of a corpus file.

    Lets callers validate dimensions and solve privacy budgets before any
    document content is parsed.
    """
    header: list[int] = []
    names = ("document count", "term count", "entry count")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            header.append(_parse_header_value(line, lineno, names[len(header)]))
            if len(header) == 3:
                return header[0], header[1], header[2]
    raise CorpusFormatError("truncated header: expected 3 lines (D, V, NNZ)")


def serialize_corpus(corpus: Corpus) -> str:
    nnz = sum(doc.term_ids.size for doc in corpus.documents)
    out = [str(corpus.doc_count), str(corpus.n_terms), str(nnz)]
    for d, doc in enumerate(corpus.documents, start=1):
        for t, c in zip(doc.term_ids.tolist(), doc.counts.tolist()):
            out.append(f"{d} {t + 1} {c}")
    return "\n".join(out) + "\n"


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_corpus(corpus))
