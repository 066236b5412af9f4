"""Synthetic bag-of-words corpora with known topics, for tests and demos."""

from __future__ import annotations

import numpy as np

from ._rng import substream
from .corpus import Corpus, Document, Vocabulary, build_vocabulary


def make_vocabulary(vocab_size: int) -> Vocabulary:
    """Placeholder terms w000, w001, ... for synthetic corpora."""
    width = max(3, len(str(vocab_size - 1)))
    return build_vocabulary([f"w{i:0{width}d}" for i in range(vocab_size)])


def make_topics(vocab_size: int, n_topics: int, seed: int = 0) -> np.ndarray:
    """Well-separated ground-truth topics over disjoint term blocks.

    Each topic is a Dirichlet(1) draw over its own contiguous block of terms,
    mixed with 5% uniform mass so every term has positive probability under
    every topic. Rows sum to 1.
    """
    if vocab_size < 2 * n_topics:
        raise ValueError("need at least 2 terms per topic block")
    rng = substream(seed, "topics")
    topics = np.full((n_topics, vocab_size), 0.05 / vocab_size)
    for k, block in enumerate(np.array_split(np.arange(vocab_size), n_topics)):
        weights = rng.dirichlet(np.ones(block.size))
        topics[k, block] += 0.95 * weights
    return topics / topics.sum(axis=1, keepdims=True)


def make_topic_corpus(
    n_docs: int,
    topics: np.ndarray,
    doc_len: int = 40,
    alpha: float = 0.1,
    seed: int = 0,
) -> Corpus:
    """Draw documents from a known topic matrix.

    Each document mixes topics with Dirichlet(alpha) proportions and draws
    ``doc_len`` words from the mixture. Deterministic given ``seed``.
    """
    if n_docs < 1 or doc_len < 1:
        raise ValueError("n_docs and doc_len must be positive")
    n_topics, vocab_size = topics.shape
    rng = substream(seed, "docs")
    docs = []
    for _ in range(n_docs):
        theta = rng.dirichlet(np.full(n_topics, alpha))
        counts = rng.multinomial(doc_len, theta @ topics)
        ids = np.nonzero(counts)[0]
        docs.append(Document(ids, counts[ids]))
    return Corpus(docs, vocab_size)
