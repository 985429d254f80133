import json

import pytest

from semsmooth import corpus
from semsmooth.embeddings import EOS, SPEAKER1, SPEAKER2, SPECIAL_TOKENS, UNK, Vocabulary
from semsmooth.errors import ConfigError, ContractError, FormatError


class TestTokenize:
    @pytest.mark.parametrize(
        "text, expected",
        (
            ("How are you doing ?", ["how", "are", "you", "doing", "?"]),
            ("", []),
            ("I am doing good.", ["i", "am", "doing", "good", "."]),
            ("Wait...what?!", ["wait", ".", ".", ".", "what", "?", "!"]),
        ),
    )
    def test_tokenize(self, text, expected):
        assert corpus.tokenize(text) == expected

    def test_idempotent(self):
        tokens = corpus.tokenize("Well, that's GREAT news: 42 points!")
        assert corpus.tokenize(" ".join(tokens)) == tokens


class TestConversation:
    def test_too_short(self):
        with pytest.raises(ContractError, match="fewer than 2 turns"):
            corpus.Conversation(turns=("hi",))

    def test_empty_turn(self):
        with pytest.raises(ContractError, match="empty"):
            corpus.Conversation(turns=("hi", "   "))


class TestLoadCorpus:
    def test_load(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text(
            "\n".join(
                json.dumps({"turns": turns})
                for turns in (["hi", "hello"], ["a", "b", "c"], ["how?", "fine."])
            )
            + "\n"
        )

        conversations = corpus.load_corpus(path)

        assert len(conversations) == 3
        assert conversations[1].turns == ("a", "b", "c")

    def test_dump_and_load(self, tmp_path, tiny_conversations):
        path = tmp_path / "corpus.jsonl"
        corpus.dump_corpus(tiny_conversations, path)
        assert corpus.load_corpus(path) == tiny_conversations

    @pytest.mark.parametrize(
        "line, message",
        (
            ('{"turns": ["hi"]}', "fewer than 2 turns"),
            ('{"turns": ["hi", "hello"]', "Invalid JSON"),
            ('{"utterances": ["hi", "hello"]}', "Missing 'turns'"),
            ('{"turns": "hi hello"}', "must be a list"),
            ('{"turns": ["hi", "hello"], "emotion": "joy"}', "Unexpected keys: emotion"),
        ),
        ids=("one-turn", "invalid-json", "missing-turns", "not-a-list", "extra-key"),
    )
    def test_malformed(self, tmp_path, line, message):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"turns": ["hi", "hello"]}\n' + line + "\n")

        with pytest.raises(FormatError, match=message) as excinfo:
            corpus.load_corpus(path)

        assert excinfo.value.lineno == 2

    def test_invalid_utf8(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_bytes(b'{"turns": ["hi", "hello"]}\n{"turns": ["caf\xe9", "ok"]}\n')

        with pytest.raises(FormatError, match="Invalid UTF-8") as excinfo:
            corpus.load_corpus(path)

        assert excinfo.value.lineno == 2


class TestBuildVocab:
    def test_ordering(self):
        conversations = [
            corpus.Conversation(turns=("the cat", "the dog")),
            corpus.Conversation(turns=("a dog", "the end")),
        ]

        vocab = corpus.build_vocab(conversations)

        assert vocab.tokens[:6] == SPECIAL_TOKENS
        assert vocab.tokens[6:] == ("the", "dog", "a", "cat", "end")

    def test_min_count(self, tiny_conversations):
        vocab = corpus.build_vocab(tiny_conversations, min_count=3)
        # "was" occurs 5 times, the others 3 times each
        assert vocab.tokens[6:] == ("was", ".", "?", "it", "the")

    def test_min_count_above_everything(self, tiny_conversations):
        vocab = corpus.build_vocab(tiny_conversations, min_count=1000)
        assert vocab.tokens == SPECIAL_TOKENS

        examples = corpus.build_examples(tiny_conversations[0], vocab)
        assert set(examples[0].response_ids) == {UNK, EOS}

    def test_deterministic(self, tiny_conversations):
        assert corpus.build_vocab(tiny_conversations) == corpus.build_vocab(
            list(reversed(tiny_conversations))
        )

    def test_empty(self):
        with pytest.raises(ContractError):
            corpus.build_vocab([])

    def test_invalid_min_count(self, tiny_conversations):
        with pytest.raises(ConfigError):
            corpus.build_vocab(tiny_conversations, min_count=0)


class TestBuildExamples:
    @pytest.fixture
    def vocab(self):
        return Vocabulary.from_tokens(("a", "b", "c", "x"))

    def test_two_turns(self, vocab):
        conversation = corpus.Conversation(turns=("a b", "c"))

        examples = corpus.build_examples(conversation, vocab)

        assert len(examples) == 1
        assert examples[0].context_ids == (SPEAKER1, vocab.index("a"), vocab.index("b"))
        assert examples[0].response_ids == (vocab.index("c"), EOS)

    def test_three_turns(self, vocab):
        conversation = corpus.Conversation(turns=("a", "b", "c zebra"))

        second = corpus.build_examples(conversation, vocab)[1]

        assert second.context_ids == (SPEAKER1, vocab.index("a"), SPEAKER2, vocab.index("b"))
        assert second.response_ids == (vocab.index("c"), UNK, EOS)

    def test_truncation(self, vocab):
        # 1 speaker token + 59 words = 60 context tokens
        conversation = corpus.Conversation(turns=(" ".join(["a"] * 58 + ["b"]), "c"))

        (example,) = corpus.build_examples(conversation, vocab)

        assert len(example.context_ids) == 50
        assert example.context_ids[-1] == vocab.index("b")
        assert SPEAKER1 not in example.context_ids

    def test_suffix_and_invariants(self, vocab):
        turns = tuple(" ".join(["a", "b", "x"] * n) for n in range(1, 9))
        conversation = corpus.Conversation(turns=turns)

        for number, example in enumerate(corpus.build_examples(conversation, vocab), start=1):
            full = corpus.encode_context(turns[:number], vocab, max_context=10_000)
            assert len(example.context_ids) <= 50
            assert example.context_ids == full[-len(example.context_ids) :]
            assert example.response_ids[-1] == EOS
            assert SPEAKER1 not in example.response_ids
            assert SPEAKER2 not in example.response_ids

    def test_build_all_examples(self, tiny_conversations, tiny_vocab):
        examples = corpus.build_all_examples(tiny_conversations, tiny_vocab)
        assert len(examples) == 4


class TestSplitConversations:
    def test_split(self, tiny_conversations):
        conversations = tiny_conversations * 4

        train, test = corpus.split_conversations(conversations, 0.25, seed=3)

        assert len(test) == 3
        assert len(train) == 9
        assert corpus.split_conversations(conversations, 0.25, seed=3) == (train, test)

    def test_keeps_one_of_each(self, tiny_conversations):
        train, test = corpus.split_conversations(tiny_conversations[:2], 0.9, seed=0)
        assert len(train) == len(test) == 1

    @pytest.mark.parametrize("fraction", (0.0, 1.0))
    def test_invalid_fraction(self, tiny_conversations, fraction):
        with pytest.raises(ConfigError):
            corpus.split_conversations(tiny_conversations, fraction, seed=0)
