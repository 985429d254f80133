"""Train and evaluate every legal (loss, s, t, w) combination on one corpus."""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import torch

from ..corpus import Conversation, load_corpus, split_conversations
from ..errors import ConfigError, SemSmoothError
from ..reports import (
    REPORT_JSON,
    EvalReport,
    failed_row,
    metadata,
    read_report,
    summarize_grid,
    write_json,
    write_report,
    write_table,
)
from ..runspec import RunSpec, grid_cells, thread_limit
from ..smoothing import load_synonyms
from . import add_training_arguments, train_overrides_from_args
from .evaluate import evaluate_model
from .train import train_run


log = logging.getLogger(__name__)

CELLS_DIR = "cells"
DONE_MARKER = "DONE"
RESULTS_CSV = "results.csv"
RESULTS_JSON = "results.json"
SUMMARY_JSON = "summary.json"


def register_subcommand(subparsers):
    subcmd_name = "grid"

    grid_parser = subparsers.add_parser(
        subcmd_name,
        help="Train and evaluate all 30 loss and smoothing settings",
    )

    grid_parser.add_argument("--corpus", required=True, help="Training conversations")
    grid_parser.add_argument(
        "--test-corpus",
        help="Test conversations (default: hold out --test-fraction of --corpus)",
    )
    grid_parser.add_argument(
        "--test-fraction",
        type=float,
        default=0.1,
        help="Share of --corpus held out for testing if no --test-corpus is given",
    )
    grid_parser.add_argument("--embeddings", help="Word vectors in GloVe text layout")
    grid_parser.add_argument("--lexicon", help="Synonym lexicon")
    grid_parser.add_argument("--seed", type=int, default=0, help="Base random seed")
    grid_parser.add_argument(
        "--seed-per-cell",
        action="store_true",
        help="Give cell number n the seed base seed + n instead of the base seed",
    )
    grid_parser.add_argument("--out", required=True, help="Output directory")
    grid_parser.add_argument(
        "--resume", action="store_true", help="Skip cells finished by an earlier run"
    )
    grid_parser.add_argument(
        "--jobs", type=int, default=1, help="Number of cells to run in parallel"
    )
    add_training_arguments(grid_parser)

    return subcmd_name


@dataclass
class GridSettings:
    """Everything each cell needs besides its RunSpec."""

    train_conversations: list[Conversation]
    test_conversations: list[Conversation]
    lexicon_path: Optional[Path] = None
    preset: str = "desk"
    min_count: int = 1
    train_overrides: dict[str, Any] = field(default_factory=dict)
    model_overrides: dict[str, Any] = field(default_factory=dict)


@dataclass
class CellOutcome:
    spec: RunSpec
    report: Optional[EvalReport] = None
    error: Optional[str] = None
    skipped: bool = False


def cell_dir(out_dir: Union[str, Path], spec: RunSpec) -> Path:
    return Path(out_dir) / CELLS_DIR / spec.cell_id


def is_done(directory: Path) -> bool:
    return (directory / DONE_MARKER).exists()


def run_cell(spec: RunSpec, settings: GridSettings) -> EvalReport:
    """Train one cell, score it on the test conversations and mark it done."""
    started = time.monotonic()

    run = train_run(
        spec,
        preset=settings.preset,
        min_count=settings.min_count,
        train_overrides=settings.train_overrides,
        model_overrides=settings.model_overrides,
        conversations=settings.train_conversations,
    )
    lexicon = load_synonyms(settings.lexicon_path) if settings.lexicon_path else None
    metrics = evaluate_model(run.model, run.vocab, settings.test_conversations, lexicon=lexicon)

    report = EvalReport(
        metrics=metrics, runspec=spec, runtime_seconds=time.monotonic() - started
    )
    write_report(report, spec.out_dir)
    (spec.out_dir / DONE_MARKER).write_text(spec.cell_id + "\n", encoding="utf-8")
    return report


def _run_cell_guarded(spec: RunSpec, settings: GridSettings) -> CellOutcome:
    try:
        return CellOutcome(spec=spec, report=run_cell(spec, settings))
    except (SemSmoothError, OSError) as exc:
        log.error("%s failed: %s", spec.cell_id, exc)
        return CellOutcome(spec=spec, error=str(exc))
    except Exception as exc:
        # the remaining cells still run
        log.exception("%s failed unexpectedly", spec.cell_id)
        return CellOutcome(spec=spec, error=f"{type(exc).__name__}: {exc}")


def _init_worker(threads: int):
    torch.set_num_threads(threads)


def run_grid(
    base: RunSpec,
    settings: GridSettings,
    *,
    resume: bool = False,
    jobs: int = 1,
    seed_per_cell: bool = False,
    cells: Optional[Sequence[RunSpec]] = None,
) -> list[CellOutcome]:
    """Run every grid cell and write the result table, raw results and summary.

    A failing cell is recorded and the grid goes on. With `resume`, cells with a done marker
    are read back from disk instead of being recomputed.

    :param base: paths and seed shared by all cells; ``base.out_dir`` receives all output
    :param settings: data and training settings shared by all cells
    :param resume: whether to skip finished cells
    :param jobs: number of cells to run in parallel, capped by $SEMSMOOTH_THREADS
    :param seed_per_cell: whether to derive a different seed for each cell
    :param cells: the cells to run instead of the full grid
    :return: one outcome per cell, in grid order
    """
    if base.out_dir is None:
        raise ConfigError("No output directory given (--out)")
    if jobs < 1:
        raise ConfigError(f"--jobs must be at least 1, got {jobs}")

    limit = thread_limit()
    if limit is not None:
        jobs = min(jobs, limit)

    if cells is None:
        cells = list(grid_cells(base, seed_per_cell=seed_per_cell))
    cells = [cell.with_paths(out_dir=cell_dir(base.out_dir, cell)) for cell in cells]

    outcomes: dict[str, CellOutcome] = {}
    pending = []
    for number, spec in enumerate(cells, start=1):
        if resume and is_done(spec.out_dir):
            log.info("[%d/%d] %s: done already, skipping", number, len(cells), spec.cell_id)
            outcomes[spec.cell_id] = CellOutcome(
                spec=spec, report=read_report(spec.out_dir / REPORT_JSON), skipped=True
            )
        else:
            pending.append((number, spec))

    if jobs == 1:
        for number, spec in pending:
            log.info("[%d/%d] %s", number, len(cells), spec.cell_id)
            outcomes[spec.cell_id] = _run_cell_guarded(spec, settings)
    elif pending:
        threads = max(1, (limit or torch.get_num_threads()) // jobs)
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_worker, initargs=(threads,)
        ) as executor:
            futures = {
                spec.cell_id: executor.submit(_run_cell_guarded, spec, settings)
                for _, spec in pending
            }
            for number, spec in pending:
                outcomes[spec.cell_id] = futures[spec.cell_id].result()
                log.info("[%d/%d] %s finished", number, len(cells), spec.cell_id)

    ordered = [outcomes[spec.cell_id] for spec in cells]
    write_grid_results(base.out_dir, ordered)
    return ordered


def write_grid_results(out_dir: Union[str, Path], outcomes: Sequence[CellOutcome]):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    write_table(
        [
            outcome.report.row() if outcome.report else failed_row(outcome.spec)
            for outcome in outcomes
        ],
        out_dir / RESULTS_CSV,
    )

    write_json(
        {
            "cells": [
                {
                    "cell": outcome.spec.cell_id,
                    "runspec": outcome.spec.as_dict(),
                    "metrics": outcome.report.metrics.as_dict() if outcome.report else None,
                    "error": outcome.error,
                }
                for outcome in outcomes
            ],
            "metadata": {
                **metadata(),
                "runtime_seconds": {
                    outcome.spec.cell_id: outcome.report.runtime_seconds
                    for outcome in outcomes
                    if outcome.report
                },
            },
        },
        out_dir / RESULTS_JSON,
    )

    reports = [outcome.report for outcome in outcomes if outcome.report]
    write_json(summarize_grid(reports), out_dir / SUMMARY_JSON)


def main(args):
    """Main method."""
    conversations = load_corpus(args.corpus)
    if args.test_corpus:
        train_conversations = conversations
        test_conversations = load_corpus(args.test_corpus)
    else:
        train_conversations, test_conversations = split_conversations(
            conversations, args.test_fraction, args.seed or 0
        )

    base = RunSpec(
        seed=args.seed or 0,
        corpus=args.corpus,
        embeddings=args.embeddings,
        lexicon=args.lexicon,
        out_dir=args.out,
    )
    settings = GridSettings(
        train_conversations=train_conversations,
        test_conversations=test_conversations,
        lexicon_path=base.lexicon,
        preset=args.preset or "desk",
        min_count=args.min_count or 1,
        train_overrides=train_overrides_from_args(args),
    )

    outcomes = run_grid(
        base,
        settings,
        resume=args.resume,
        jobs=args.jobs or 1,
        seed_per_cell=args.seed_per_cell,
    )

    failed = [outcome for outcome in outcomes if outcome.error]
    log.info(
        "%d of %d cells finished, results in %s",
        len(outcomes) - len(failed),
        len(outcomes),
        Path(args.out) / RESULTS_CSV,
    )
