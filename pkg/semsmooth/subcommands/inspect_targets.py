import csv
import io
import json
from typing import Any

from .. import pager
from ..corpus import build_vocab, load_corpus
from ..errors import ConfigError
from ..runspec import target_policy_for
from ..smoothing import TargetPolicy, inspect_distribution, load_target_table
from . import add_run_arguments, runspec_from_args
from .build_targets import lexicon_for, vocabulary_and_vectors


def register_subcommand(subparsers):
    subcmd_name = "inspect"

    inspect_parser = subparsers.add_parser(
        subcmd_name,
        help="Show the target distribution of a word",
    )

    inspect_parser.add_argument("word", help="The correct word to show the distribution for")
    inspect_parser.add_argument(
        "--targets", help="Target table written by 'build-targets', instead of computing it"
    )
    inspect_parser.add_argument(
        "--csv",
        action="store_true",
        help="Print 'token,probability' rows, the word itself first, instead of JSON",
    )
    add_run_arguments(inspect_parser)
    inspect_parser.add_argument(
        "--min-count", type=int, default=1, help="Minimum token frequency for the vocabulary"
    )

    return subcmd_name


def policy_from_args(args) -> TargetPolicy:
    if args.targets:
        return load_target_table(args.targets)

    spec = runspec_from_args(args)
    if spec.s is None:
        raise ConfigError("Nothing to inspect without smoothing, pass --s (and --t) or --targets")

    lexicon = lexicon_for(spec)
    min_count = args.min_count or 1

    if spec.t is None and spec.corpus is not None:
        # uniform smoothing needs the vocabulary only
        vocab = build_vocab(load_corpus(spec.corpus), min_count)
        return target_policy_for(spec, vocab)

    vocab, embeddings = vocabulary_and_vectors(spec, min_count=min_count)
    return target_policy_for(spec, vocab, embeddings, lexicon)


def record_as_csv(record: dict[str, Any]) -> str:
    """Headerless ``token,probability`` rows, the correct word first."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow((record["word"], repr(record["correct_probability"])))
    for token, probability in record["support"]:
        writer.writerow((token, repr(probability)))
    return buffer.getvalue().rstrip("\n")


def main(args):
    """Main method."""
    record = inspect_distribution(args.word, policy_from_args(args))

    if args.csv:
        text = record_as_csv(record)
    else:
        text = json.dumps(record, indent=2)

    pager.page(text, enabled=args.pager)
