"""End-to-end private topic model training and evaluation.

Orchestrates budget solving, the minibatch loop (sample, truncate, E-step,
aggregate, perturb, M-step), ledger updates, held-out perplexity bounds,
top-word reports, and the model dump / trace file formats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, logsumexp

from ._rng import substream
from .corpus import Corpus, Document, MinibatchSpec, Vocabulary, sample_indices, truncate_document
from .privacy import (
    AccountantLedger,
    BudgetSpec,
    CompositionMethod,
    DpBudget,
    PerIterationBudget,
    solve_budget,
)
from .variational import (
    aggregate_stats,
    dirichlet_expectation,
    e_step_document,
    init_topic_matrix,
    learning_rate,
    m_step,
    perturb_stats,
)


@dataclass(frozen=True)
class TrainerConfig:
    """Resolved training hyperparameters.

    ``alpha`` and ``eta`` default to 1/n_topics when left as None; ``budget``
    None trains without privatization; ``eval_every`` None evaluates about 20
    times over the run.
    """

    n_topics: int
    batch_size: int
    n_iterations: int
    max_doc_len: int | None = None
    alpha: float | None = None
    eta: float | None = None
    tau0: float = 1024.0
    kappa: float = 0.7
    seed: int = 0
    budget: BudgetSpec | None = None
    eval_every: int | None = None
    tol: float = 1e-3
    max_inner: int = 100
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_topics < 1:
            raise ValueError("n_topics must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if self.max_doc_len is not None and self.max_doc_len < 1:
            raise ValueError("max_doc_len must be >= 1")
        if self.eval_every is not None and self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")

    @property
    def resolved_alpha(self) -> float:
        return self.alpha if self.alpha is not None else 1.0 / self.n_topics

    @property
    def resolved_eta(self) -> float:
        return self.eta if self.eta is not None else 1.0 / self.n_topics


@dataclass(frozen=True)
class Checkpoint:
    iteration: int
    docs_seen: int
    perplexity: float
    epsilon_spent: float


@dataclass
class TrainingTrace:
    checkpoints: list[Checkpoint] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.checkpoints)


def _check_budget_consistency(config: TrainerConfig, corpus: Corpus) -> BudgetSpec:
    budget = config.budget
    if budget.method == CompositionMethod.NONE:
        raise ValueError("budget with method 'none' should be passed as budget=None")
    if config.max_doc_len is None:
        raise ValueError("private training requires max_doc_len")
    if budget.iterations != config.n_iterations:
        raise ValueError(
            f"budget iterations {budget.iterations} != config n_iterations "
            f"{config.n_iterations}"
        )
    ratio = config.batch_size / corpus.doc_count
    if not math.isclose(budget.sampling_ratio, ratio, rel_tol=1e-12):
        raise ValueError(
            f"budget sampling_ratio {budget.sampling_ratio} != batch_size/doc_count {ratio}"
        )
    sens = config.max_doc_len / config.batch_size
    if not math.isclose(budget.sensitivity, sens, rel_tol=1e-12):
        raise ValueError(
            f"budget sensitivity {budget.sensitivity} != max_doc_len/batch_size {sens}"
        )
    return budget


def _e_step_batch(docs, elog_beta, alpha, tol, max_inner, n_jobs):
    if n_jobs == 1 or len(docs) < 2:
        return [e_step_document(d, elog_beta, alpha, tol, max_inner) for d in docs]
    from joblib import Parallel, delayed

    chunks = np.array_split(np.arange(len(docs)), min(n_jobs, len(docs)))
    parts = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_e_step_chunk)([docs[i] for i in chunk], elog_beta, alpha, tol, max_inner)
        for chunk in chunks
    )
    return [post for part in parts for post in part]


def _e_step_chunk(docs, elog_beta, alpha, tol, max_inner):
    return [e_step_document(d, elog_beta, alpha, tol, max_inner) for d in docs]


def train(
    corpus: Corpus,
    vocab: Vocabulary | None,
    config: TrainerConfig,
    eval_docs: list[Document] | None = None,
) -> tuple[np.ndarray, TrainingTrace, AccountantLedger]:
    """Run the private topic modeling loop for exactly J iterations.

    Returns the final topic matrix, the checkpoint trace, and the privacy
    ledger (one entry per iteration; zero-spend entries when no budget is
    set). The budget is solved before any document is touched, so an
    infeasible budget aborts without reading data. Bit-reproducible given
    (config, corpus) regardless of n_jobs.
    """
    if vocab is not None and len(vocab) != corpus.n_terms:
        raise ValueError(
            f"vocabulary size {len(vocab)} != corpus term space {corpus.n_terms}"
        )
    if config.batch_size > corpus.doc_count:
        raise ValueError(
            f"batch_size {config.batch_size} exceeds corpus size {corpus.doc_count}"
        )

    # Privacy first: nothing below may execute on an infeasible budget.
    per_iteration: PerIterationBudget | None = None
    if config.budget is not None:
        budget = _check_budget_consistency(config, corpus)
        per_iteration = solve_budget(budget)
        ledger = AccountantLedger(budget.method, budget.delta_tot)
    else:
        budget = None
        ledger = AccountantLedger(CompositionMethod.NONE, 0.0)

    n_topics = config.n_topics
    n_terms = corpus.n_terms
    batch_size = config.batch_size
    alpha = config.resolved_alpha
    eta = config.resolved_eta
    cap = config.max_doc_len

    if cap is None:
        mean_len = corpus.total_word_count() / corpus.doc_count
    else:
        mean_len = sum(min(d.total_words, cap) for d in corpus.documents) / corpus.doc_count
    lam = init_topic_matrix(
        n_topics, n_terms, corpus.doc_count, mean_len, eta, substream(config.seed, "init")
    )

    trace = TrainingTrace()
    total_iters = config.n_iterations
    if total_iters == 0:
        return lam, trace, ledger

    eval_set = eval_docs if eval_docs is not None else corpus.documents
    cadence = config.eval_every or max(1, total_iters // 20)

    def checkpoint(t: int) -> None:
        perp = heldout_perplexity(eval_set, lam, alpha, config.tol, config.max_inner)
        trace.checkpoints.append(
            Checkpoint(t, t * batch_size, perp, ledger.total().epsilon)
        )

    checkpoint(0)
    batch_spec = MinibatchSpec.for_corpus(corpus, batch_size, config.seed)
    for t in range(1, total_iters + 1):
        idx = sample_indices(corpus.doc_count, batch_spec, t)
        docs = []
        for i in idx:
            doc = corpus.documents[i]
            if cap is not None:
                doc = truncate_document(doc, cap, substream(config.seed, "trunc", i))
            docs.append(doc)

        elog_beta = dirichlet_expectation(lam)
        posteriors = _e_step_batch(
            docs, elog_beta, alpha, config.tol, config.max_inner, config.n_jobs
        )
        stats = aggregate_stats(list(zip(docs, posteriors)), batch_size, n_topics, n_terms)

        if per_iteration is not None:
            stats = perturb_stats(stats, per_iteration.sigma, substream(config.seed, "noise", t))
            ledger.record_gaussian(
                t,
                budget.sensitivity,
                per_iteration.sigma,
                budget.sampling_ratio,
                per_iteration.delta_iter,
            )
        else:
            ledger.record_nonprivate(t)

        lam = m_step(lam, stats, eta, corpus.doc_count, learning_rate(t, config.tau0, config.kappa))
        if t % cadence == 0 or t == total_iters:
            checkpoint(t)
    return lam, trace, ledger


def heldout_perplexity(
    test_docs: list[Document],
    lam: np.ndarray,
    alpha: float,
    tol: float = 1e-3,
    max_inner: int = 100,
) -> float:
    """Per-word perplexity bound of held-out documents under a trained topic
    matrix.

    Runs the E-step per document against ``lam``, evaluates the per-document
    variational bound E_q[log p(words, theta, z | lam)] - E_q[log q(theta, z)]
    at the responsibilities implied by the converged gamma, and exponentiates
    the negative per-word total. Lower is better; this upper-bounds the true
    perplexity.
    """
    if not test_docs:
        raise ValueError("empty test set")
    lam = np.asarray(lam, dtype=np.float64)
    n_topics = lam.shape[0]
    elog_beta = dirichlet_expectation(lam)
    bound = 0.0
    words = 0
    for doc in test_docs:
        post = e_step_document(doc, elog_beta, alpha, tol, max_inner)
        gamma = post.gamma
        elog_theta = digamma(gamma) - digamma(gamma.sum())
        # Word terms at the optimal responsibilities for this gamma.
        mix = elog_theta[:, None] + elog_beta[:, doc.term_ids]
        bound += float(doc.counts @ logsumexp(mix, axis=0))
        # Topic proportion prior and entropy.
        bound += float(np.dot(alpha - gamma, elog_theta))
        bound += float(gammaln(gamma).sum()) - n_topics * float(gammaln(alpha))
        bound += float(gammaln(n_topics * alpha)) - float(gammaln(gamma.sum()))
        words += doc.total_words
    return math.exp(-bound / words)


def top_words(
    lam: np.ndarray, vocab: Vocabulary, n: int
) -> list[list[tuple[str, float]]]:
    """Top ``n`` terms per topic by normalized probability.

    Ties break toward the smaller term id. Probabilities are the topic row
    normalized to sum to one.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if n < 1 or n > lam.shape[1]:
        raise ValueError(f"n must be in [1, {lam.shape[1]}]")
    if lam.shape[1] != len(vocab):
        raise ValueError("topic matrix width != vocabulary size")
    probs = lam / lam.sum(axis=1, keepdims=True)
    report = []
    for row in probs:
        order = np.argsort(-row, kind="stable")[:n]
        report.append([(vocab.terms[v], float(row[v])) for v in order])
    return report


@dataclass(frozen=True)
class EvalReport:
    perplexity_bound: float
    per_topic_top_words: list[list[tuple[str, float]]]


# ---------------------------------------------------------------------------
# Model dump: versioned JSON with the topic matrix at full float precision.
# ---------------------------------------------------------------------------

MODEL_FORMAT = "dplda-topic-model"
MODEL_FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """A model dump fails to parse or validate."""


@dataclass(frozen=True)
class ModelDump:
    topic_matrix: np.ndarray
    alpha: float
    eta: float
    budget: BudgetSpec | None = None
    per_iteration: PerIterationBudget | None = None
    accounted: DpBudget | None = None

    @property
    def n_topics(self) -> int:
        return self.topic_matrix.shape[0]

    @property
    def n_terms(self) -> int:
        return self.topic_matrix.shape[1]


def save_model(model: ModelDump, path) -> None:
    lam = np.asarray(model.topic_matrix, dtype=np.float64)
    doc = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "n_topics": int(lam.shape[0]),
        "n_terms": int(lam.shape[1]),
        "alpha": model.alpha,
        "eta": model.eta,
        "topic_matrix": [row.tolist() for row in lam],
        "budget": None
        if model.budget is None
        else {
            "method": model.budget.method.value,
            "epsilon_tot": model.budget.epsilon_tot,
            "delta_tot": model.budget.delta_tot,
            "iterations": model.budget.iterations,
            "sampling_ratio": model.budget.sampling_ratio,
            "sensitivity": model.budget.sensitivity,
        },
        "per_iteration": None
        if model.per_iteration is None
        else {
            "epsilon_iter": model.per_iteration.epsilon_iter,
            "delta_iter": model.per_iteration.delta_iter,
            "sigma": model.per_iteration.sigma,
        },
        "accounted": None
        if model.accounted is None
        else {"epsilon": model.accounted.epsilon, "delta": model.accounted.delta},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path) -> ModelDump:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ModelFormatError(
                f"{path}: parse error at line {e.lineno}, column {e.colno}: {e.msg}"
            ) from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported format version {doc.get('format_version')!r}"
        )
    try:
        lam = np.asarray(doc["topic_matrix"], dtype=np.float64)
        alpha = float(doc["alpha"])
        eta = float(doc["eta"])
        shape = (int(doc["n_topics"]), int(doc["n_terms"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"{path}: malformed field: {e}") from None
    if lam.ndim != 2 or lam.shape != shape:
        raise ModelFormatError(
            f"{path}: topic matrix shape {lam.shape} != declared {shape}"
        )
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise ModelFormatError(f"{path}: topic matrix entries must be positive")
    budget = None
    if doc.get("budget") is not None:
        b = doc["budget"]
        try:
            budget = BudgetSpec(
                epsilon_tot=float(b["epsilon_tot"]),
                delta_tot=float(b["delta_tot"]),
                iterations=int(b["iterations"]),
                sampling_ratio=float(b["sampling_ratio"]),
                sensitivity=float(b["sensitivity"]),
                method=CompositionMethod(b["method"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"{path}: malformed budget: {e}") from None
    per_iteration = None
    if doc.get("per_iteration") is not None:
        p = doc["per_iteration"]
        per_iteration = PerIterationBudget(
            float(p["epsilon_iter"]), float(p["delta_iter"]), float(p["sigma"])
        )
    accounted = None
    if doc.get("accounted") is not None:
        a = doc["accounted"]
        accounted = DpBudget(float(a["epsilon"]), float(a["delta"]))
    return ModelDump(lam, alpha, eta, budget, per_iteration, accounted)


TRACE_HEADER = "iteration,docs_seen,perplexity,epsilon_spent"


def save_trace(trace: TrainingTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRACE_HEADER + "\n")
        for c in trace.checkpoints:
            fh.write(f"{c.iteration},{c.docs_seen},{c.perplexity!r},{c.epsilon_spent!r}\n")
