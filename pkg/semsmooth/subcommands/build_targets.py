import logging
from pathlib import Path
from typing import Optional, Union

from ..corpus import build_vocab, load_corpus
from ..embeddings import EmbeddingMatrix, Vocabulary, embeddings_for_vocab, load_embeddings
from ..errors import ConfigError
from ..runspec import RunSpec
from ..smoothing import (
    SynonymLexicon,
    TargetTable,
    dump_target_table,
    load_synonyms,
    precompute_target_table,
)
from . import add_run_arguments, runspec_from_args


log = logging.getLogger(__name__)

TARGETS_FILE = "targets.json"


def register_subcommand(subparsers):
    subcmd_name = "build-targets"

    build_targets_parser = subparsers.add_parser(
        subcmd_name,
        help="Precompute the similarity-weighted target distribution of every word",
    )

    add_run_arguments(build_targets_parser)
    build_targets_parser.add_argument(
        "--min-count", type=int, default=1, help="Minimum token frequency for the vocabulary"
    )

    return subcmd_name


def vocabulary_and_vectors(
    spec: RunSpec, *, min_count: int = 1
) -> tuple[Vocabulary, EmbeddingMatrix]:
    """The vocabulary of the corpus, or of the vector file if no corpus is given, and its vectors."""
    if spec.embeddings is None:
        raise ConfigError("Similarity-weighted targets need word vectors (--embeddings)")

    source_vocab, source = load_embeddings(spec.embeddings)
    if spec.corpus is None:
        return source_vocab, source

    vocab = build_vocab(load_corpus(spec.corpus), min_count)
    return vocab, embeddings_for_vocab(vocab, source_vocab, source)


def lexicon_for(spec: RunSpec) -> Optional[SynonymLexicon]:
    if spec.w and spec.lexicon is None:
        raise ConfigError("The synonym mask needs a synonym lexicon (--lexicon)")
    if spec.lexicon is None:
        return None
    return load_synonyms(spec.lexicon)


def build_targets(spec: RunSpec, *, min_count: int = 1) -> TargetTable:
    """Target table for the smoothing settings of `spec`."""
    if spec.t is None:
        raise ConfigError("Building a target table needs --s and --t")

    lexicon = lexicon_for(spec)
    vocab, embeddings = vocabulary_and_vectors(spec, min_count=min_count)
    return precompute_target_table(vocab, embeddings, spec.smoothing_config(), lexicon)


def write_targets(table: TargetTable, out_dir: Union[str, Path]) -> tuple[Path, str]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / TARGETS_FILE
    return path, dump_target_table(table, path)


def main(args):
    """Main method."""
    spec = runspec_from_args(args)
    if spec.out_dir is None:
        raise ConfigError("No output directory given (--out)")

    table = build_targets(spec, min_count=args.min_count or 1)
    path, checksum = write_targets(table, spec.out_dir)

    log.info("Wrote target table for %d words to %s", len(table), path)
    print(checksum)
