import numpy as np
import pytest

from semsmooth.corpus import Conversation, dump_corpus
from semsmooth.embeddings import EmbeddingMatrix, Vocabulary, seeded_vector
from semsmooth.smoothing import SynonymLexicon, dump_synonyms
from semsmooth.subcommands.make_synthetic import make_synthetic


# Hand-made vectors: "great" and "awesome" lie close to "good", "bad" points the opposite way and
# "movie" is orthogonal to "good".
TINY_VECTORS = {
    "good": (1.0, 0.0, 0.0),
    "great": (0.9, 0.3, 0.0),
    "awesome": (0.8, 0.0, 0.5),
    "bad": (-1.0, 0.0, 0.0),
    "movie": (0.0, -0.1, 0.2),
}


@pytest.fixture
def tiny_vocab():
    return Vocabulary.from_tokens(TINY_VECTORS)


@pytest.fixture
def tiny_embeddings(tiny_vocab):
    return EmbeddingMatrix(
        np.array([TINY_VECTORS.get(token, seeded_vector(token, 3)) for token in tiny_vocab])
    )


@pytest.fixture
def tiny_lexicon():
    return SynonymLexicon({"good": ["great"]})


@pytest.fixture
def tiny_conversations():
    return [
        Conversation(turns=("How was the movie?", "It was good.")),
        Conversation(turns=("How was the food?", "The food was great.", "Glad to hear!")),
        Conversation(turns=("Did you like it?", "No, it was bad.")),
    ]


@pytest.fixture
def vectors_file(tmp_path):
    """Word vectors of the tiny vocabulary in GloVe text layout."""
    path = tmp_path / "vectors.txt"
    path.write_text(
        "".join(
            f"{token} {' '.join(repr(value) for value in vector)}\n"
            for token, vector in TINY_VECTORS.items()
        ),
        encoding="utf-8",
    )
    return path


@pytest.fixture
def lexicon_file(tmp_path, tiny_lexicon):
    path = tmp_path / "lexicon.tsv"
    dump_synonyms(tiny_lexicon, path)
    return path


@pytest.fixture
def corpus_file(tmp_path, tiny_conversations):
    path = tmp_path / "corpus.jsonl"
    dump_corpus(tiny_conversations, path)
    return path


@pytest.fixture
def synthetic_files(tmp_path):
    """A small synthetic corpus with its lexicon and word vectors on disk."""
    return make_synthetic(tmp_path / "synthetic", seed=0, n_conversations=40, dim=16)
