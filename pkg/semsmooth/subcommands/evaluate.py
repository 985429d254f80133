import json
import logging
import time
from pathlib import Path
from typing import Optional, Sequence, Union

from ..corpus import Conversation, build_examples, load_corpus, tokenize
from ..embeddings import Vocabulary
from ..errors import ConfigError, FormatError, numbered_lines
from ..metrics import MetricReport, evaluate_run
from ..model import Seq2SeqTransformer, load_checkpoint
from ..reports import EvalReport, write_report
from ..runspec import RunSpec
from ..smoothing import SynonymLexicon, load_synonyms
from .decode import add_decoding_arguments, decode_contexts


log = logging.getLogger(__name__)


def register_subcommand(subparsers):
    subcmd_name = "evaluate"

    evaluate_parser = subparsers.add_parser(
        subcmd_name,
        help="Score generated responses with BLEU, ROUGE and METEOR",
    )

    evaluate_parser.add_argument(
        "--checkpoint", help="Decode the test corpus with this model and score the responses"
    )
    evaluate_parser.add_argument("--corpus", help="Test conversations (with --checkpoint)")
    evaluate_parser.add_argument(
        "--hypotheses", help="Score these responses, one tokenized sentence per line"
    )
    evaluate_parser.add_argument(
        "--references", help="Gold responses for --hypotheses, one tokenized sentence per line"
    )
    evaluate_parser.add_argument("--lexicon", help="Synonym lexicon for METEOR")
    add_decoding_arguments(evaluate_parser)
    evaluate_parser.add_argument(
        "--out", required=True, help="Directory receiving report.json and report.csv"
    )

    return subcmd_name


def read_token_lines(path: Union[str, Path]) -> list[list[str]]:
    return [line.split() for _, line in numbered_lines(path)]


def scoring_pairs(
    conversations: Sequence[Conversation], vocab: Vocabulary, max_context: int
) -> tuple[list[tuple[int, ...]], list[list[str]]]:
    """Contexts to decode and the gold responses they are scored against.

    References are the tokenized gold turns, so words unknown to the model still count.
    """
    contexts = []
    references = []
    for conversation in conversations:
        examples = build_examples(conversation, vocab, max_context)
        contexts.extend(example.context_ids for example in examples)
        references.extend(tokenize(turn) for turn in conversation.turns[1:])
    return contexts, references


def evaluate_model(
    model: Seq2SeqTransformer,
    vocab: Vocabulary,
    conversations: Sequence[Conversation],
    *,
    lexicon: Optional[SynonymLexicon] = None,
    beam_width: int = 1,
    max_len: Optional[int] = None,
) -> MetricReport:
    """Decode a response for every turn after the first and score it against the gold turn."""
    contexts, references = scoring_pairs(conversations, vocab, model.config.max_context)
    hypotheses = decode_contexts(
        model, vocab, contexts, beam_width=beam_width, max_len=max_len
    )
    return evaluate_run(hypotheses, references, lexicon)


def evaluate_checkpoint(
    checkpoint: Union[str, Path],
    conversations: Sequence[Conversation],
    *,
    lexicon: Optional[SynonymLexicon] = None,
    beam_width: int = 1,
    max_len: Optional[int] = None,
) -> EvalReport:
    started = time.monotonic()
    model, vocab, metadata = load_checkpoint(checkpoint)

    runspec = None
    if "runspec" in metadata:
        try:
            runspec = RunSpec.from_dict(metadata["runspec"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"Malformed run configuration: {exc}", path=checkpoint) from None

    metrics = evaluate_model(
        model, vocab, conversations, lexicon=lexicon, beam_width=beam_width, max_len=max_len
    )
    return EvalReport(
        metrics=metrics, runspec=runspec, runtime_seconds=time.monotonic() - started
    )


def evaluate_files(
    hypotheses: Union[str, Path],
    references: Union[str, Path],
    *,
    lexicon: Optional[SynonymLexicon] = None,
) -> EvalReport:
    started = time.monotonic()
    metrics = evaluate_run(read_token_lines(hypotheses), read_token_lines(references), lexicon)
    return EvalReport(metrics=metrics, runtime_seconds=time.monotonic() - started)


def main(args):
    """Main method."""
    lexicon = load_synonyms(args.lexicon) if args.lexicon else None

    if args.checkpoint:
        if args.hypotheses or args.references:
            raise ConfigError("--checkpoint can't be combined with --hypotheses/--references")
        if not args.corpus:
            raise ConfigError("--checkpoint needs a test corpus (--corpus)")
        report = evaluate_checkpoint(
            args.checkpoint,
            load_corpus(args.corpus),
            lexicon=lexicon,
            beam_width=args.beam_width or 1,
            max_len=args.max_len,
        )
    elif args.hypotheses and args.references:
        report = evaluate_files(args.hypotheses, args.references, lexicon=lexicon)
    else:
        raise ConfigError("Need either --checkpoint and --corpus, or --hypotheses and --references")

    json_path, csv_path = write_report(report, args.out)
    log.debug("Wrote %s and %s", json_path, csv_path)

    print(json.dumps(report.metrics.as_dict(), indent=2, sort_keys=True))
