import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

from ..corpus import build_vocab, dump_corpus
from ..embeddings import dump_embeddings
from ..smoothing import dump_synonyms
from ..synthetic import (
    DEFAULT_CLUSTERS,
    parse_cluster_spec,
    synthetic_corpus,
    synthetic_embeddings,
)


log = logging.getLogger(__name__)

CORPUS_FILE = "corpus.jsonl"
LEXICON_FILE = "lexicon.tsv"
VECTORS_FILE = "vectors.txt"


def register_subcommand(subparsers):
    subcmd_name = "make-synthetic"

    make_synthetic_parser = subparsers.add_parser(
        subcmd_name,
        help="Generate a dialogue corpus with synonym clusters, its lexicon and word vectors",
    )

    make_synthetic_parser.add_argument("--seed", type=int, default=0, help="Random seed")
    make_synthetic_parser.add_argument(
        "--count", type=int, default=2000, help="Number of conversations"
    )
    make_synthetic_parser.add_argument(
        "--clusters",
        type=parse_cluster_spec,
        default=DEFAULT_CLUSTERS,
        help="Synonym clusters as 'good,great,awesome;bad,awful,terrible'",
    )
    make_synthetic_parser.add_argument(
        "--dim", type=int, default=64, help="Dimension of the word vectors"
    )
    make_synthetic_parser.add_argument("--out", required=True, help="Output directory")

    return subcmd_name


@dataclass
class SyntheticFiles:
    corpus: Path
    lexicon: Path
    vectors: Path


def make_synthetic(
    out_dir: Union[str, Path],
    *,
    seed: int = 0,
    n_conversations: int = 2000,
    clusters: Sequence[Sequence[str]] = DEFAULT_CLUSTERS,
    dim: int = 64,
) -> SyntheticFiles:
    """Write a synthetic corpus, its synonym lexicon and matching word vectors to `out_dir`."""
    conversations, lexicon = synthetic_corpus(seed, n_conversations, clusters)
    vocab = build_vocab(conversations)
    embeddings = synthetic_embeddings(vocab, lexicon, dim=dim, seed=seed)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = SyntheticFiles(
        corpus=out_dir / CORPUS_FILE,
        lexicon=out_dir / LEXICON_FILE,
        vectors=out_dir / VECTORS_FILE,
    )

    dump_corpus(conversations, files.corpus)
    dump_synonyms(lexicon, files.lexicon)
    dump_embeddings(vocab, embeddings, files.vectors)

    log.info(
        "Wrote %d conversations over %d words to %s", len(conversations), len(vocab), out_dir
    )

    return files


def main(args):
    """Main method."""
    make_synthetic(
        args.out,
        seed=args.seed or 0,
        n_conversations=args.count or 2000,
        clusters=args.clusters or DEFAULT_CLUSTERS,
        dim=args.dim or 64,
    )
