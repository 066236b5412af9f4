"""scikit-learn adapter for private online topic inference.

PrivateLDA exposes the trainer through the familiar fit/transform surface so
it composes with pipelines, grid search, and the rest of the ecosystem. X is
a documents-by-terms count matrix (dense or CSR); the native corpus objects
remain available through the functional API in ``dplda.training``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_non_negative

from .corpus import Corpus, Document
from .privacy import BudgetSpec, CompositionMethod, solve_budget
from .training import TrainerConfig, heldout_perplexity, train
from .variational import dirichlet_expectation, e_step_document


def corpus_from_matrix(X) -> Corpus:
    """Convert a nonnegative integer count matrix to a Corpus."""
    X = check_array(X, accept_sparse="csr", dtype=(np.int64, np.float64))
    check_non_negative(X, "corpus_from_matrix")
    if sp.issparse(X):
        X = X.tocsr()
        data = X.data
    else:
        data = X
    if not np.all(np.equal(np.mod(data, 1), 0)):
        raise ValueError("document-term matrix must contain integer counts")
    n_docs, n_terms = X.shape
    docs = []
    for d in range(n_docs):
        if sp.issparse(X):
            row = X.getrow(d)
            ids, counts = row.indices, row.data
            order = np.argsort(ids)
            ids, counts = ids[order], counts[order]
        else:
            ids = np.nonzero(X[d])[0]
            counts = X[d, ids]
        if ids.size == 0:
            raise ValueError(f"document {d} has no words")
        docs.append(Document(ids.astype(np.int64), counts.astype(np.int64)))
    return Corpus(docs, n_terms)


class PrivateLDA(BaseEstimator, TransformerMixin):
    """Latent Dirichlet Allocation trained by differentially private
    stochastic variational inference.

    Per minibatch, the expected sufficient statistics are perturbed with
    Gaussian noise calibrated so that ``n_steps`` iterations at the corpus
    sampling ratio stay within the total (epsilon, delta) budget under the
    chosen composition method. ``composition="none"`` trains the standard
    non-private online LDA.

    Parameters
    ----------
    n_components : int
        Number of topics.
    doc_topic_prior : float or None
        Dirichlet prior on topic proportions (alpha); 1/n_components if None.
    topic_word_prior : float or None
        Dirichlet prior on topics (eta); 1/n_components if None.
    batch_size : int
        Documents per iteration, sampled uniformly without replacement.
    n_steps : int
        Number of minibatch iterations. Fixed up front: the privacy budget
        is solved for exactly this many iterations before data is touched.
    max_doc_len : int or None
        Length cap applied per document before the E-step; required when a
        privacy budget is set (the statistics sensitivity is
        max_doc_len/batch_size).
    epsilon, delta : float or None
        Total privacy budget; required unless composition is "none".
    composition : {"zcdp", "advanced", "linear", "none"}
        Budget composition method across iterations.
    learning_offset : float
        Downweights early iterations (tau0 in the step size).
    learning_decay : float
        Step size exponent (kappa), in (0.5, 1].
    eval_every : int or None
        Checkpoint cadence for the training trace; None checkpoints about 20
        times over the run.
    tol : float
        Mean absolute change in gamma that stops the per-document E-step.
    max_doc_update_iter : int
        E-step iteration cap per document.
    random_state : int
        Master seed; identical seeds give bit-identical models regardless of
        n_jobs.
    n_jobs : int
        Threads for the per-document E-step.

    Attributes
    ----------
    components_ : ndarray of shape (n_components, n_terms)
        Variational Dirichlet parameters of each topic.
    per_iteration_budget_ : PerIterationBudget or None
        Solved (epsilon_iter, delta_iter, sigma) for private runs.
    ledger_ : AccountantLedger
        Per-iteration privacy spend with running totals.
    trace_ : TrainingTrace
        Perplexity/epsilon checkpoints.
    """

    def __init__(
        self,
        n_components: int = 10,
        *,
        doc_topic_prior: float | None = None,
        topic_word_prior: float | None = None,
        batch_size: int = 32,
        n_steps: int = 100,
        max_doc_len: int | None = None,
        epsilon: float | None = None,
        delta: float | None = None,
        composition: str = "none",
        learning_offset: float = 1024.0,
        learning_decay: float = 0.7,
        eval_every: int | None = None,
        tol: float = 1e-3,
        max_doc_update_iter: int = 100,
        random_state: int = 0,
        n_jobs: int = 1,
    ):
        self.n_components = n_components
        self.doc_topic_prior = doc_topic_prior
        self.topic_word_prior = topic_word_prior
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.max_doc_len = max_doc_len
        self.epsilon = epsilon
        self.delta = delta
        self.composition = composition
        self.learning_offset = learning_offset
        self.learning_decay = learning_decay
        self.eval_every = eval_every
        self.tol = tol
        self.max_doc_update_iter = max_doc_update_iter
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _as_corpus(self, X) -> Corpus:
        return X if isinstance(X, Corpus) else corpus_from_matrix(X)

    def _build_config(self, corpus: Corpus) -> TrainerConfig:
        method = CompositionMethod(self.composition)
        budget = None
        if method != CompositionMethod.NONE:
            for name in ("epsilon", "delta", "max_doc_len"):
                if getattr(self, name) is None:
                    raise ValueError(
                        f"composition={self.composition!r} requires {name}"
                    )
            budget = BudgetSpec(
                epsilon_tot=self.epsilon,
                delta_tot=self.delta,
                iterations=self.n_steps,
                sampling_ratio=self.batch_size / corpus.doc_count,
                sensitivity=self.max_doc_len / self.batch_size,
                method=method,
            )
        return TrainerConfig(
            n_topics=self.n_components,
            batch_size=self.batch_size,
            n_iterations=self.n_steps,
            max_doc_len=self.max_doc_len,
            alpha=self.doc_topic_prior,
            eta=self.topic_word_prior,
            tau0=self.learning_offset,
            kappa=self.learning_decay,
            seed=self.random_state,
            budget=budget,
            eval_every=self.eval_every,
            tol=self.tol,
            max_inner=self.max_doc_update_iter,
            n_jobs=self.n_jobs,
        )

    def fit(self, X, y=None):
        """Train on a documents-by-terms count matrix (or a Corpus)."""
        corpus = self._as_corpus(X)
        config = self._build_config(corpus)
        lam, trace, ledger = train(corpus, None, config)
        self.components_ = lam
        self.trace_ = trace
        self.ledger_ = ledger
        self.per_iteration_budget_ = (
            None if config.budget is None else solve_budget(config.budget)
        )
        self.n_features_in_ = corpus.n_terms
        return self

    def transform(self, X):
        """Posterior topic proportions per document, rows summing to 1."""
        check_is_fitted(self, "components_")
        corpus = self._as_corpus(X)
        if corpus.n_terms != self.components_.shape[1]:
            raise ValueError(
                f"X has {corpus.n_terms} terms; model was trained with "
                f"{self.components_.shape[1]}"
            )
        elog_beta = dirichlet_expectation(self.components_)
        alpha = self.doc_topic_prior if self.doc_topic_prior is not None else 1.0 / self.n_components
        gammas = np.vstack(
            [
                e_step_document(d, elog_beta, alpha, self.tol, self.max_doc_update_iter).gamma
                for d in corpus.documents
            ]
        )
        return gammas / gammas.sum(axis=1, keepdims=True)

    def perplexity(self, X) -> float:
        """Held-out per-word perplexity bound (lower is better)."""
        check_is_fitted(self, "components_")
        corpus = self._as_corpus(X)
        alpha = self.doc_topic_prior if self.doc_topic_prior is not None else 1.0 / self.n_components
        return heldout_perplexity(
            corpus.documents, self.components_, alpha, self.tol, self.max_doc_update_iter
        )

    def score(self, X, y=None) -> float:
        """Per-word variational bound (negative log perplexity); higher is
        better."""
        return -float(np.log(self.perplexity(X)))
