import pytest

from semsmooth.embeddings import EOS, Vocabulary
from semsmooth.errors import ConfigError, FormatError
from semsmooth.model import load_checkpoint
from semsmooth.runspec import RunSpec
from semsmooth.subcommands import decode, train

from ...common import TINY_MODEL, MainArgs


@pytest.fixture
def checkpoint(tmp_path, corpus_file):
    run = train.train_run(
        RunSpec(corpus=corpus_file, out_dir=tmp_path / "run"),
        train_overrides=dict(epochs=1),
        model_overrides=dict(TINY_MODEL, max_response=6),
    )
    return run.checkpoint_path


def output_lines(text):
    # responses may be empty, so don't drop empty lines
    return text.split("\n")[:-1]


class TestDecode:
    """Test the semsmooth.subcommands.decode module"""

    def test_response_tokens(self):
        vocab = Vocabulary.from_tokens(["hi", "there"])
        assert decode.response_tokens([6, 7, EOS], vocab) == ["hi", "there"]
        assert decode.response_tokens([6, 7], vocab) == ["hi", "there"]
        assert decode.response_tokens([EOS], vocab) == []

    def test_decode_contexts(self, checkpoint):
        model, vocab, _ = load_checkpoint(checkpoint)

        responses = decode.decode_contexts(model, vocab, [(1, 6), (2,)], max_len=4)

        assert len(responses) == 2
        for tokens in responses:
            assert len(tokens) <= 4
            assert all(token in vocab for token in tokens)

    def test_beam_search_is_deterministic(self, checkpoint):
        model, vocab, _ = load_checkpoint(checkpoint)
        contexts = [(1, 6, 7)]

        first = decode.decode_contexts(model, vocab, contexts, beam_width=3)
        second = decode.decode_contexts(model, vocab, contexts, beam_width=3)

        assert first == second

    def test_invalid_max_len(self, checkpoint):
        model, vocab, _ = load_checkpoint(checkpoint)
        with pytest.raises(ConfigError):
            decode.decode_contexts(model, vocab, [(1,)], max_len=0)

    def test_main_context(self, checkpoint, capsys):
        decode.main(MainArgs(checkpoint=str(checkpoint), context=["How was the movie?"]))

        assert len(output_lines(capsys.readouterr().out)) == 1

    def test_main_corpus(self, tmp_path, checkpoint, corpus_file, capsys):
        out = tmp_path / "responses.txt"

        decode.main(MainArgs(checkpoint=str(checkpoint), corpus=str(corpus_file), out=str(out)))

        assert capsys.readouterr().out == ""
        # one response per turn after the first
        assert len(output_lines(out.read_text())) == 4

    def test_main_broken_checkpoint(self, tmp_path):
        broken = tmp_path / "checkpoint.pt"
        broken.write_bytes(b"no checkpoint")

        with pytest.raises(FormatError):
            decode.main(MainArgs(checkpoint=str(broken), context=["hi"]))
