"""Command-line interface: train, budget, and eval subcommands.

Exit codes: 0 success, 1 I/O or file format errors, 2 flag validation,
3 infeasible privacy budget.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

from . import __version__
from .corpus import CorpusFormatError, load_corpus, load_vocabulary, peek_corpus_header
from .privacy import (
    AccountantLedger,
    BudgetInfeasibleError,
    BudgetSpec,
    CompositionMethod,
    forward_account,
    solve_budget,
)
from .training import (
    ModelDump,
    ModelFormatError,
    TrainerConfig,
    heldout_perplexity,
    load_model,
    save_model,
    save_trace,
    top_words,
    train,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3

BUDGET_CSV_HEADER = "method,epsilon_iter,delta_iter,sigma,accounted_epsilon_tot"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dplda",
        description="Differentially private stochastic variational inference "
        "for topic models.",
    )
    parser.add_argument("--version", action="version", version=f"dplda {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a (possibly private) topic model")
    p.add_argument("--corpus", required=True, help="sparse bag-of-words corpus file")
    p.add_argument("--vocab", required=True, help="vocabulary file, one term per line")
    p.add_argument("--topics", type=int, required=True, metavar="K")
    p.add_argument("--batch-size", type=int, required=True, metavar="S")
    p.add_argument("--iters", type=int, metavar="J")
    p.add_argument(
        "--docs-budget",
        type=int,
        metavar="DOCS",
        help="alternative to --iters: run ceil(DOCS/S) iterations",
    )
    p.add_argument("--out", required=True, help="model dump path")
    p.add_argument("--epsilon", type=float, help="total privacy budget")
    p.add_argument("--delta", type=float, help="total tolerance")
    p.add_argument(
        "--composition",
        choices=["zcdp", "advanced", "linear", "none"],
        default="none",
    )
    p.add_argument("--max-doc-len", type=int, metavar="N")
    p.add_argument("--alpha", type=float, help="topic proportion prior (default 1/K)")
    p.add_argument("--eta", type=float, help="topic prior (default 1/K)")
    p.add_argument("--tau0", type=float, default=1024.0)
    p.add_argument("--kappa", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="trace CSV path (default: OUT.trace.csv)")
    p.add_argument("--eval-corpus", help="held-out corpus for trace perplexity")
    p.add_argument("--eval-every", type=int)
    p.add_argument("--n-jobs", type=int, default=1)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("budget", help="solve per-iteration budgets, CSV to stdout")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--sampling-ratio", type=float, required=True)
    p.add_argument("--sensitivity", type=float, required=True)
    p.add_argument(
        "--composition",
        choices=["zcdp", "advanced", "linear", "all"],
        required=True,
    )
    p.set_defaults(handler=_cmd_budget)

    p = sub.add_parser("eval", help="held-out perplexity and top words")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--top-words", type=int, metavar="N")
    p.set_defaults(handler=_cmd_eval)
    return parser


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(path, config: TrainerConfig, inputs: dict[str, str | None]) -> None:
    """Record every resolved setting and input digest needed to reproduce the
    run byte for byte. Thread count is deliberately excluded: it does not
    affect outputs."""
    budget = config.budget
    manifest = {
        "tool": "dplda",
        "tool_version": __version__,
        "command": "train",
        "seed": config.seed,
        "config": {
            "n_topics": config.n_topics,
            "batch_size": config.batch_size,
            "n_iterations": config.n_iterations,
            "max_doc_len": config.max_doc_len,
            "alpha": config.resolved_alpha,
            "eta": config.resolved_eta,
            "tau0": config.tau0,
            "kappa": config.kappa,
            "eval_every": config.eval_every or max(1, config.n_iterations // 20),
            "tol": config.tol,
            "max_inner": config.max_inner,
            "composition": "none" if budget is None else budget.method.value,
            "epsilon_tot": None if budget is None else budget.epsilon_tot,
            "delta_tot": None if budget is None else budget.delta_tot,
            "sampling_ratio": None if budget is None else budget.sampling_ratio,
            "sensitivity": None if budget is None else budget.sensitivity,
        },
        "inputs": {
            name: None
            if path_ is None
            else {"name": os.path.basename(path_), "sha256": _sha256(path_)}
            for name, path_ in inputs.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _cmd_train(args) -> int:
    if (args.iters is None) == (args.docs_budget is None):
        print("error: exactly one of --iters or --docs-budget is required", file=sys.stderr)
        return EXIT_USAGE
    method = CompositionMethod(args.composition)
    if method != CompositionMethod.NONE:
        for flag in ("epsilon", "delta", "max_doc_len"):
            if getattr(args, flag) is None:
                print(
                    f"error: --composition {method.value} requires "
                    f"--{flag.replace('_', '-')}",
                    file=sys.stderr,
                )
                return EXIT_USAGE
    if args.batch_size < 1 or args.topics < 1:
        print("error: --topics and --batch-size must be positive", file=sys.stderr)
        return EXIT_USAGE

    # Budget feasibility is decided from the header alone, before any
    # document is parsed.
    doc_count, n_terms_header, _ = peek_corpus_header(args.corpus)
    if args.batch_size > doc_count:
        print(
            f"error: --batch-size {args.batch_size} exceeds corpus size {doc_count}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    iters = args.iters if args.iters is not None else math.ceil(args.docs_budget / args.batch_size)

    budget = None
    if method != CompositionMethod.NONE:
        budget = BudgetSpec(
            epsilon_tot=args.epsilon,
            delta_tot=args.delta,
            iterations=iters,
            sampling_ratio=args.batch_size / doc_count,
            sensitivity=args.max_doc_len / args.batch_size,
            method=method,
        )
        solved = solve_budget(budget)  # raises BudgetInfeasibleError -> exit 3
        print(
            f"solved budget: method={method.value} "
            f"epsilon_iter={solved.epsilon_iter!r} "
            f"delta_iter={solved.delta_iter!r} sigma={solved.sigma!r}"
        )

    vocab = load_vocabulary(args.vocab)
    if len(vocab) != n_terms_header:
        print(
            f"error: vocabulary size {len(vocab)} != corpus term count "
            f"{n_terms_header}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    corpus = load_corpus(args.corpus)
    eval_docs = None
    if args.eval_corpus:
        eval_corpus = load_corpus(args.eval_corpus)
        if eval_corpus.n_terms != n_terms_header:
            print(
                f"error: eval corpus term count {eval_corpus.n_terms} != "
                f"{n_terms_header}",
                file=sys.stderr,
            )
            return EXIT_USAGE
        eval_docs = eval_corpus.documents

    config = TrainerConfig(
        n_topics=args.topics,
        batch_size=args.batch_size,
        n_iterations=iters,
        max_doc_len=args.max_doc_len,
        alpha=args.alpha,
        eta=args.eta,
        tau0=args.tau0,
        kappa=args.kappa,
        seed=args.seed,
        budget=budget,
        eval_every=args.eval_every,
        n_jobs=args.n_jobs,
    )
    lam, trace, ledger = train(corpus, vocab, config, eval_docs=eval_docs)

    accounted = forward_account(ledger) if budget is not None else None
    save_model(
        ModelDump(
            topic_matrix=lam,
            alpha=config.resolved_alpha,
            eta=config.resolved_eta,
            budget=budget,
            per_iteration=None if budget is None else solve_budget(budget),
            accounted=accounted,
        ),
        args.out,
    )
    trace_path = args.trace or args.out + ".trace.csv"
    save_trace(trace, trace_path)
    _write_manifest(
        args.out + ".manifest.json",
        config,
        {"corpus": args.corpus, "vocab": args.vocab, "eval_corpus": args.eval_corpus},
    )
    final = trace.checkpoints[-1] if trace.checkpoints else None
    if final is not None:
        print(
            f"trained {iters} iterations; final perplexity bound "
            f"{final.perplexity:.4f}"
            + (f"; accounted epsilon {accounted.epsilon!r}" if accounted else "")
        )
    return EXIT_OK


def _cmd_budget(args) -> int:
    if not 0.0 < args.sampling_ratio <= 1.0:
        print("error: --sampling-ratio must be in (0, 1]", file=sys.stderr)
        return EXIT_USAGE
    methods = (
        [CompositionMethod.ZCDP, CompositionMethod.ADVANCED, CompositionMethod.LINEAR]
        if args.composition == "all"
        else [CompositionMethod(args.composition)]
    )
    rows = []
    for method in methods:
        spec = BudgetSpec(
            epsilon_tot=args.epsilon,
            delta_tot=args.delta,
            iterations=args.iters,
            sampling_ratio=args.sampling_ratio,
            sensitivity=args.sensitivity,
            method=method,
        )
        try:
            solved = solve_budget(spec)
        except BudgetInfeasibleError as e:
            print(f"error: {method.value}: {e}", file=sys.stderr)
            return EXIT_INFEASIBLE
        ledger = AccountantLedger(method, args.delta)
        for t in range(1, args.iters + 1):
            ledger.record_gaussian(
                t, args.sensitivity, solved.sigma, args.sampling_ratio, solved.delta_iter
            )
        accounted = forward_account(ledger)
        rows.append(
            f"{method.value},{solved.epsilon_iter!r},{solved.delta_iter!r},"
            f"{solved.sigma!r},{accounted.epsilon!r}"
        )
    print(BUDGET_CSV_HEADER)
    for row in rows:
        print(row)
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    vocab = load_vocabulary(args.vocab)
    if len(vocab) != model.n_terms:
        print(
            f"error: vocabulary size {len(vocab)} != model term count "
            f"{model.n_terms}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    corpus = load_corpus(args.corpus)
    if corpus.n_terms != model.n_terms:
        print(
            f"error: corpus term count {corpus.n_terms} != model term count "
            f"{model.n_terms}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    perp = heldout_perplexity(corpus.documents, model.topic_matrix, model.alpha)
    print(f"perplexity {perp!r}")
    if args.top_words is not None:
        if not 1 <= args.top_words <= model.n_terms:
            print("error: --top-words out of range", file=sys.stderr)
            return EXIT_USAGE
        for k, ranked in enumerate(top_words(model.topic_matrix, vocab, args.top_words)):
            print(f"topic {k}:")
            for term, prob in ranked:
                print(f"{term} {prob:.4f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.handler(args)
    except BudgetInfeasibleError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (CorpusFormatError, ModelFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
