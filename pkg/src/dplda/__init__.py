"""Differentially private stochastic variational inference for topic models.

Per-minibatch expected sufficient statistics are released through a clamped
Gaussian mechanism whose scale is solved from a total (epsilon, delta) budget
via zCDP composition plus subsampling amplification, with linear and advanced
composition as baselines.
"""

__version__ = "0.1.0"

from .corpus import (
    Corpus,
    CorpusFormatError,
    Document,
    MinibatchSpec,
    Vocabulary,
    build_vocabulary,
    ingest_sparse,
    load_corpus,
    load_vocabulary,
    sample_minibatch,
    save_corpus,
    save_vocabulary,
    truncate_document,
)
from .datasets import make_topic_corpus, make_topics, make_vocabulary
from .estimator import PrivateLDA, corpus_from_matrix
from .privacy import (
    AccountantLedger,
    BudgetInfeasibleError,
    BudgetSpec,
    CompositionMethod,
    DpBudget,
    PerIterationBudget,
    ZcdpBudget,
    account_iterations,
    amplify,
    compose_zcdp,
    forward_account,
    gaussian_sigma,
    invert_amplify,
    solve_budget,
    zcdp_of_gaussian,
    zcdp_to_dp,
)
from .training import (
    EvalReport,
    ModelDump,
    ModelFormatError,
    TrainerConfig,
    TrainingTrace,
    heldout_perplexity,
    load_model,
    save_model,
    save_trace,
    top_words,
    train,
)
from .variational import (
    LocalPosterior,
    aggregate_stats,
    dirichlet_expectation,
    e_step_document,
    learning_rate,
    m_step,
    perturb_stats,
    sensitivity_bound,
)

__all__ = [
    "AccountantLedger",
    "BudgetInfeasibleError",
    "BudgetSpec",
    "CompositionMethod",
    "Corpus",
    "CorpusFormatError",
    "Document",
    "DpBudget",
    "EvalReport",
    "LocalPosterior",
    "MinibatchSpec",
    "ModelDump",
    "ModelFormatError",
    "PerIterationBudget",
    "PrivateLDA",
    "TrainerConfig",
    "TrainingTrace",
    "Vocabulary",
    "ZcdpBudget",
    "account_iterations",
    "aggregate_stats",
    "amplify",
    "build_vocabulary",
    "compose_zcdp",
    "corpus_from_matrix",
    "dirichlet_expectation",
    "e_step_document",
    "forward_account",
    "gaussian_sigma",
    "heldout_perplexity",
    "ingest_sparse",
    "invert_amplify",
    "learning_rate",
    "load_corpus",
    "load_model",
    "load_vocabulary",
    "m_step",
    "make_topic_corpus",
    "make_topics",
    "make_vocabulary",
    "perturb_stats",
    "sample_minibatch",
    "save_corpus",
    "save_model",
    "save_trace",
    "save_vocabulary",
    "sensitivity_bound",
    "solve_budget",
    "top_words",
    "train",
    "truncate_document",
    "zcdp_of_gaussian",
    "zcdp_to_dp",
]
