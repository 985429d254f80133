"""Conversations, tokenization and the training examples built from them."""

import json
import logging
import random
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

from .embeddings import EOS, SPEAKER1, SPEAKER2, Vocabulary
from .errors import ConfigError, ContractError, FormatError, numbered_lines


log = logging.getLogger(__name__)

MAX_CONTEXT = 50

token_re = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase `text` and split it into words and single punctuation characters."""
    return token_re.findall(text.lower())


@dataclass(frozen=True)
class Conversation:
    """Utterances of a dialogue, speakers alternating, starting with the first speaker."""

    turns: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if len(self.turns) < 2:
            raise ContractError("A conversation has fewer than 2 turns")
        for number, turn in enumerate(self.turns, start=1):
            if not isinstance(turn, str):
                raise ContractError(f"Turn {number} isn't a string")
            if not tokenize(turn):
                raise ContractError(f"Turn {number} is empty after tokenization")


@dataclass(frozen=True)
class TrainingExample:
    context_ids: tuple[int, ...]
    response_ids: tuple[int, ...]


def load_corpus(path: Union[str, Path]) -> list[Conversation]:
    """Load conversations from a JSON lines file of ``{"turns": [...]}`` objects."""
    path = Path(path)
    conversations = []

    for lineno, line in numbered_lines(path):
        if not line.strip():
            continue

        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"Invalid JSON: {exc.msg}", path=path, lineno=lineno) from None

        if not isinstance(record, dict) or "turns" not in record:
            raise FormatError("Missing 'turns'", path=path, lineno=lineno)
        if set(record) != {"turns"}:
            unexpected = ", ".join(sorted(set(record) - {"turns"}))
            raise FormatError(f"Unexpected keys: {unexpected}", path=path, lineno=lineno)
        if not isinstance(record["turns"], list):
            raise FormatError("'turns' must be a list", path=path, lineno=lineno)

        try:
            conversations.append(Conversation(turns=record["turns"]))
        except ContractError as exc:
            raise FormatError(str(exc).lower(), path=path, lineno=lineno) from None

    log.debug("Loaded %d conversations from %s", len(conversations), path)

    return conversations


def dump_corpus(conversations: Iterable[Conversation], path: Union[str, Path]):
    with Path(path).open("w", encoding="utf-8") as fp:
        for conversation in conversations:
            print(json.dumps({"turns": list(conversation.turns)}, ensure_ascii=False), file=fp)


def build_vocab(conversations: Sequence[Conversation], min_count: int = 1) -> Vocabulary:
    """Vocabulary of the special tokens, then corpus tokens occurring at least `min_count` times.

    Tokens are ordered by descending frequency, ties broken lexicographically.
    """
    if min_count < 1:
        raise ConfigError(f"min_count must be at least 1, got {min_count}")
    if not conversations:
        raise ContractError("Can't build a vocabulary from an empty corpus")

    counts = Counter(
        token
        for conversation in conversations
        for turn in conversation.turns
        for token in tokenize(turn)
    )
    ordered = sorted(
        (token for token, count in counts.items() if count >= min_count),
        key=lambda token: (-counts[token], token),
    )
    return Vocabulary.from_tokens(ordered)


def build_examples(
    conversation: Conversation, vocab: Vocabulary, max_context: int = MAX_CONTEXT
) -> list[TrainingExample]:
    """One example per turn after the first.

    The context is the speaker-tagged concatenation of all previous turns, cut to the most recent
    `max_context` tokens (speaker tokens included). The response is the turn itself followed by
    ``[eos]``. Unknown tokens map to ``[unk]``.
    """
    examples = []
    history: list[int] = []

    for number, turn in enumerate(conversation.turns):
        token_ids = vocab.encode(tokenize(turn))

        if number:
            examples.append(
                TrainingExample(
                    context_ids=tuple(history[-max_context:]),
                    response_ids=tuple(token_ids) + (EOS,),
                )
            )

        history.append(SPEAKER1 if number % 2 == 0 else SPEAKER2)
        history.extend(token_ids)

    return examples


def encode_context(
    turns: Sequence[str], vocab: Vocabulary, max_context: int = MAX_CONTEXT
) -> tuple[int, ...]:
    """Speaker-tagged token ids of `turns`, as the context for the turn after them."""
    history: list[int] = []
    for number, turn in enumerate(turns):
        history.append(SPEAKER1 if number % 2 == 0 else SPEAKER2)
        history.extend(vocab.encode(tokenize(turn)))
    return tuple(history[-max_context:])


def build_all_examples(
    conversations: Iterable[Conversation], vocab: Vocabulary, max_context: int = MAX_CONTEXT
) -> list[TrainingExample]:
    return [
        example
        for conversation in conversations
        for example in build_examples(conversation, vocab, max_context)
    ]


def split_conversations(
    conversations: Sequence[Conversation], test_fraction: float, seed: int
) -> tuple[list[Conversation], list[Conversation]]:
    """Seeded split into training and test conversations, each keeping corpus order."""
    if not 0 < test_fraction < 1:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if len(conversations) < 2:
        raise ContractError("Splitting needs at least 2 conversations")

    n_test = min(len(conversations) - 1, max(1, round(test_fraction * len(conversations))))
    indices = list(range(len(conversations)))
    random.Random(seed).shuffle(indices)
    test_indices = set(indices[:n_test])

    train = [conv for i, conv in enumerate(conversations) if i not in test_indices]
    test = [conv for i, conv in enumerate(conversations) if i in test_indices]
    return train, test
