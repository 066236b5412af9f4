"""Variational math for topic inference.

Dirichlet log expectations, the per-document E-step fixed point, minibatch
expected sufficient statistics, Gaussian perturbation with clamping at zero,
the worst-case statistics sensitivity, and the stochastic M-step blend.

Every function here is pure; parallel callers are responsible only for
keeping the reduction order of aggregate_stats fixed, which it does itself by
sorting on document content.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from .corpus import Document


def dirichlet_expectation(params: np.ndarray) -> np.ndarray:
    """E[log X] for X ~ Dirichlet(params).

    For a 2-D input each row is an independent Dirichlet. Uses the identity
    E[log X_v] = psi(params_v) - psi(sum(params)).
    """
    params = np.asarray(params, dtype=np.float64)
    if params.size == 0 or not np.all(np.isfinite(params)) or np.any(params <= 0):
        raise ValueError("Dirichlet parameters must be positive and finite")
    if params.ndim == 1:
        return digamma(params) - digamma(params.sum())
    if params.ndim == 2:
        return digamma(params) - digamma(params.sum(axis=1))[:, None]
    raise ValueError("expected a 1-D or 2-D parameter array")


@dataclass
class LocalPosterior:
    """Per-document variational posterior.

    ``gamma`` is the length-K Dirichlet parameter over topic proportions;
    ``phi`` has one row per distinct term (rows sum to 1) giving the topic
    responsibilities of that term's tokens.
    """

    gamma: np.ndarray
    phi: np.ndarray


def e_step_document(
    doc: Document,
    elog_beta: np.ndarray,
    alpha: float,
    tol: float = 1e-3,
    max_inner: int = 100,
) -> LocalPosterior:
    """Run the per-document fixed point to convergence.

    Alternates phi[v, k] proportional to exp(elog_beta[k, v] + elog_theta[k])
    and gamma = alpha + phi-weighted counts, starting from the uniform
    responsibility point gamma = alpha + total_words/K, until the mean
    absolute gamma change drops below ``tol`` or ``max_inner`` rounds pass.
    phi is normalized in log space with max subtraction, so extreme
    expected-log-topic values cannot overflow.
    """
    n_topics, n_terms = elog_beta.shape
    if doc.term_ids[-1] >= n_terms:
        raise ValueError(
            f"document term id {int(doc.term_ids[-1])} out of range for "
            f"{n_terms} terms"
        )
    eb = elog_beta[:, doc.term_ids]  # (K, n_distinct)
    counts = doc.counts.astype(np.float64)
    gamma = np.full(n_topics, alpha + doc.total_words / n_topics)
    for _ in range(max_inner):
        elog_theta = digamma(gamma) - digamma(gamma.sum())
        log_phi = eb + elog_theta[:, None]
        log_phi -= log_phi.max(axis=0)
        phi = np.exp(log_phi)
        phi /= phi.sum(axis=0)
        new_gamma = alpha + phi @ counts
        converged = np.abs(new_gamma - gamma).mean() < tol
        gamma = new_gamma
        if converged:
            break
    return LocalPosterior(gamma=gamma, phi=phi.T)


def aggregate_stats(
    pairs: list[tuple[Document, LocalPosterior]],
    batch_size: int,
    n_topics: int,
    n_terms: int,
) -> np.ndarray:
    """Expected sufficient statistics of a minibatch, 1/batch_size scaled.

    s[k, v] = (1/S) * sum over documents of count(d, v) * phi(d, v, k).
    Documents are reduced in a canonical content order, so the result is
    bit-identical under any permutation of ``pairs`` or parallel schedule.
    """
    if len(pairs) != batch_size:
        raise ValueError(f"expected {batch_size} documents, got {len(pairs)}")
    stats = np.zeros((n_topics, n_terms))
    order = sorted(range(len(pairs)), key=lambda i: pairs[i][0].sort_key())
    for i in order:
        doc, post = pairs[i]
        stats[:, doc.term_ids] += post.phi.T * doc.counts
    stats /= batch_size
    return stats


def sensitivity_bound(max_doc_len: int, batch_size: int) -> float:
    """Worst-case L2 change of the scaled statistics when one document of a
    size-S batch is swapped: max_doc_len / batch_size."""
    if max_doc_len < 1 or batch_size < 1:
        raise ValueError("max_doc_len and batch_size must be positive")
    return max_doc_len / batch_size


def perturb_stats(
    stats: np.ndarray, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """Add independent N(0, sigma^2) noise per coordinate, clamping negative
    results to zero. Deterministic given ``rng``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return np.maximum(stats + rng.normal(0.0, sigma, size=stats.shape), 0.0)


def m_step(
    lambda_prev: np.ndarray,
    stats: np.ndarray,
    eta: float,
    doc_count: int,
    rho_t: float,
) -> np.ndarray:
    """Stochastic natural-gradient update of the topic matrix.

    Blends the previous matrix with the full-corpus candidate
    eta + doc_count * stats at weight ``rho_t``. Positivity is preserved for
    any clamped (nonnegative) statistics.
    """
    if lambda_prev.shape != stats.shape:
        raise ValueError("topic matrix and statistics shapes differ")
    if not 0.0 < rho_t <= 1.0:
        raise ValueError("rho_t must be in (0, 1]")
    if eta <= 0:
        raise ValueError("eta must be positive")
    if doc_count < 1:
        raise ValueError("doc_count must be >= 1")
    return (1.0 - rho_t) * lambda_prev + rho_t * (eta + doc_count * stats)


def learning_rate(t: int, tau0: float, kappa: float) -> float:
    """Robbins-Monro step size (tau0 + t)^(-kappa), clamped to (0, 1]."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if tau0 < 0:
        raise ValueError("tau0 must be nonnegative")
    if not 0.5 < kappa <= 1.0:
        raise ValueError("kappa must be in (0.5, 1]")
    return min(1.0, (tau0 + t) ** -kappa)


def init_topic_matrix(
    n_topics: int,
    n_terms: int,
    doc_count: int,
    mean_doc_len: float,
    eta: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Seeded positive initialization at the converged-mass scale.

    Entries are uniform on [eta + 0.5, eta + 1.5] times
    doc_count * mean_doc_len / (n_topics * n_terms); the jitter breaks topic
    symmetry deterministically.
    """
    if n_topics < 1 or n_terms < 2 or doc_count < 1 or mean_doc_len <= 0:
        raise ValueError("invalid topic matrix dimensions")
    scale = doc_count * mean_doc_len / (n_topics * n_terms)
    return rng.uniform(eta + 0.5, eta + 1.5, size=(n_topics, n_terms)) * scale
