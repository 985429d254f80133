import logging
from pathlib import Path
from typing import Optional, Sequence

from ..corpus import build_all_examples, encode_context, load_corpus
from ..embeddings import EOS, Vocabulary
from ..errors import ConfigError
from ..model import Seq2SeqTransformer, beam_decode, load_checkpoint


log = logging.getLogger(__name__)


def register_subcommand(subparsers):
    subcmd_name = "decode"

    decode_parser = subparsers.add_parser(
        subcmd_name,
        help="Generate responses with a trained model",
    )

    decode_parser.add_argument("--checkpoint", required=True, help="Checkpoint written by 'train'")

    source_group = decode_parser.add_mutually_exclusive_group(required=True)
    source_group.add_argument(
        "--corpus", help="Respond to every turn after the first of these conversations"
    )
    source_group.add_argument(
        "--context",
        action="append",
        help="A turn of the conversation to respond to (repeat for several turns)",
    )

    add_decoding_arguments(decode_parser)

    decode_parser.add_argument("--out", help="Write responses to this file instead of stdout")

    return subcmd_name


def add_decoding_arguments(parser):
    parser.add_argument(
        "--beam-width", type=int, default=1, help="Beam search width, 1 for greedy decoding"
    )
    parser.add_argument(
        "--max-len",
        type=int,
        default=None,
        help="Maximum response length (default: the model's maximum)",
    )


def response_tokens(ids: Sequence[int], vocab: Vocabulary) -> list[str]:
    """Tokens of a decoded response, without the final ``[eos]``."""
    ids = list(ids)
    if ids and ids[-1] == EOS:
        ids = ids[:-1]
    return vocab.decode(ids)


def decode_contexts(
    model: Seq2SeqTransformer,
    vocab: Vocabulary,
    contexts: Sequence[Sequence[int]],
    *,
    beam_width: int = 1,
    max_len: Optional[int] = None,
) -> list[list[str]]:
    """Decode a response for each context; greedy unless `beam_width` > 1."""
    if max_len is None:
        max_len = model.config.max_response
    if max_len < 1:
        raise ConfigError(f"Maximum response length must be positive, got {max_len}")

    responses = []
    for number, context_ids in enumerate(contexts, start=1):
        response_ids = beam_decode(model, context_ids, max_len, beam_width)
        responses.append(response_tokens(response_ids, vocab))
        log.debug("Decoded %d of %d", number, len(contexts))
    return responses


def main(args):
    """Main method."""
    model, vocab, _ = load_checkpoint(args.checkpoint)

    if args.corpus:
        conversations = load_corpus(args.corpus)
        contexts = [
            example.context_ids
            for example in build_all_examples(conversations, vocab, model.config.max_context)
        ]
    else:
        contexts = [encode_context(args.context, vocab, model.config.max_context)]

    responses = decode_contexts(
        model, vocab, contexts, beam_width=args.beam_width or 1, max_len=args.max_len
    )
    text = "\n".join(" ".join(tokens) for tokens in responses)

    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        log.info("Wrote %d responses to %s", len(responses), args.out)
    else:
        print(text)
