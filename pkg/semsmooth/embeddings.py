"""Vocabulary, word vectors and cosine similarities against the whole vocabulary."""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .errors import BoundsError, ConfigError, FormatError, VocabularyError, numbered_lines


log = logging.getLogger(__name__)

PAD, UNK, BOS, EOS, SPEAKER1, SPEAKER2 = range(6)
SPECIAL_TOKENS = ("[pad]", "[unk]", "[bos]", "[eos]", "[speaker1]", "[speaker2]")

# Salt for the per-token seeds of vectors which aren't read from a file. Changing it changes every
# seeded vector, i.e. it is part of the on-disk reproducibility contract.
SEEDED_VECTOR_SALT = "semsmooth-v1"
SEEDED_VECTOR_BOUND = 0.1

SIMILARITY_CLAMP_SLACK = 1e-9

_similarity_rows_computed = 0


class Vocabulary:
    """Bijective mapping between token strings and dense indices.

    The special tokens always occupy indices 0-5, in the order of `SPECIAL_TOKENS`.
    """

    def __init__(self, tokens: Iterable[str]):
        tokens = tuple(tokens)
        if tokens[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ConfigError("Vocabulary must start with the special tokens")

        index_of = {}
        for index, token in enumerate(tokens):
            if token in index_of:
                raise ConfigError(f"Token {token!r} occurs more than once in the vocabulary")
            index_of[token] = index

        self._tokens = tokens
        self._index_of = index_of

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        """Build a vocabulary of the special tokens followed by `tokens`."""
        return cls(SPECIAL_TOKENS + tuple(tokens))

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def __len__(self) -> int:
        return len(self._tokens)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index_of

    def __eq__(self, other) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._tokens == other._tokens

    def __hash__(self) -> int:
        return hash(self._tokens)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(<{len(self)} tokens>)"

    def index(self, token: str) -> int:
        try:
            return self._index_of[token]
        except KeyError:
            raise VocabularyError(f"Token {token!r} isn't in the vocabulary") from None

    def lookup(self, token: str) -> int:
        """Like index(), but map unknown tokens to `[unk]`."""
        return self._index_of.get(token, UNK)

    def token(self, index: int) -> str:
        if not 0 <= index < len(self._tokens):
            raise BoundsError(f"Index {index} is out of range for {len(self._tokens)} tokens")
        return self._tokens[index]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.lookup(token) for token in tokens]

    def decode(self, indices: Iterable[int]) -> list[str]:
        return [self.token(index) for index in indices]

    @staticmethod
    def is_special(index: int) -> bool:
        return 0 <= index < len(SPECIAL_TOKENS)


@dataclass(frozen=True)
class EmbeddingMatrix:
    """k×d matrix of word vectors, one row per vocabulary entry."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ConfigError(f"Embedding matrix must be 2-dimensional, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ConfigError("Embedding matrix contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SimilarityRow:
    """Cosine similarities of the word at `target_index` against every vocabulary entry."""

    target_index: int
    sims: np.ndarray = field(repr=False)

    def __post_init__(self):
        sims = np.asarray(self.sims, dtype=np.float64)
        if np.any(sims < -1 - SIMILARITY_CLAMP_SLACK) or np.any(sims > 1 + SIMILARITY_CLAMP_SLACK):
            raise ConfigError("Cosine similarities must lie within [-1, 1]")
        sims = np.clip(sims, -1.0, 1.0)
        sims.setflags(write=False)
        object.__setattr__(self, "sims", sims)

    def __len__(self) -> int:
        return len(self.sims)


def seeded_vector(token: str, dim: int) -> np.ndarray:
    """Pseudo-random vector for a token, uniform in (-0.1, 0.1), fixed per token string."""
    digest = hashlib.sha256(f"{SEEDED_VECTOR_SALT}:{token}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    return rng.uniform(-SEEDED_VECTOR_BOUND, SEEDED_VECTOR_BOUND, dim)


def load_embeddings(
    path: Union[str, Path], expected_dim: Optional[int] = None
) -> tuple[Vocabulary, EmbeddingMatrix]:
    """Load word vectors in GloVe text layout.

    Each nonempty line holds a token followed by its vector components, separated by single
    spaces. A token listed without components, like the special tokens, is assigned a seeded
    pseudo-random vector.

    :param path: the vector file
    :param expected_dim: the vector dimension to enforce, if known
    :return: the vocabulary (special tokens first, then file tokens in file order) and the
             embedding matrix
    """
    path = Path(path)
    dim = expected_dim
    seen = set(SPECIAL_TOKENS)
    tokens: list[str] = []
    vectors: list[Optional[list[float]]] = []

    for lineno, line in numbered_lines(path):
        if not line.strip():
            continue

        token, *fields = line.split(" ")
        if token in seen:
            raise FormatError(f"Duplicate token {token!r}", path=path, lineno=lineno)
        seen.add(token)

        if not fields:
            tokens.append(token)
            vectors.append(None)
            continue

        if dim is None:
            dim = len(fields)
        elif len(fields) != dim:
            raise FormatError(
                f"Vector of {token!r} has dimension {len(fields)}, expected {dim}",
                path=path,
                lineno=lineno,
            )

        try:
            vector = [float(value) for value in fields]
        except ValueError:
            raise FormatError(
                f"Non-numeric vector component for {token!r}", path=path, lineno=lineno
            ) from None

        if not all(np.isfinite(vector)):
            raise FormatError(
                f"Non-finite vector component for {token!r}", path=path, lineno=lineno
            )

        tokens.append(token)
        vectors.append(vector)

    if not tokens:
        raise FormatError("Vector file is empty", path=path)

    if dim is None:
        raise FormatError("Can't determine the vector dimension, no token has a vector", path=path)

    vocab = Vocabulary.from_tokens(tokens)
    rows = [seeded_vector(token, dim) for token in SPECIAL_TOKENS]
    rows.extend(
        np.asarray(vector) if vector is not None else seeded_vector(token, dim)
        for token, vector in zip(tokens, vectors)
    )

    log.debug("Loaded %d vectors of dimension %d from %s", len(tokens), dim, path)

    return vocab, EmbeddingMatrix(np.vstack(rows))


def dump_embeddings(vocab: Vocabulary, embeddings: EmbeddingMatrix, path: Union[str, Path]):
    """Write non-special vocabulary entries and their vectors in GloVe text layout."""
    with Path(path).open("w", encoding="utf-8") as fp:
        for index, token in enumerate(vocab):
            if vocab.is_special(index):
                continue
            components = " ".join(repr(float(value)) for value in embeddings.values[index])
            print(f"{token} {components}", file=fp)


def embeddings_for_vocab(
    vocab: Vocabulary, source_vocab: Vocabulary, source: EmbeddingMatrix
) -> EmbeddingMatrix:
    """Arrange vectors of `source` in the index order of `vocab`.

    Tokens of `vocab` which `source_vocab` lacks get seeded pseudo-random vectors, the same way
    the loader treats tokens listed without a vector.
    """
    rows = []
    missing = 0
    for token in vocab:
        if token in source_vocab:
            rows.append(source.values[source_vocab.index(token)])
        else:
            missing += 1
            rows.append(seeded_vector(token, source.dim))

    if missing:
        log.debug("%d of %d tokens have no pretrained vector", missing, len(vocab))

    return EmbeddingMatrix(np.vstack(rows))


def seeded_embeddings(vocab: Vocabulary, dim: int) -> EmbeddingMatrix:
    """Seeded pseudo-random vectors for every vocabulary entry, for runs without word vectors."""
    if dim < 1:
        raise ConfigError(f"Vector dimension must be positive, got {dim}")
    return EmbeddingMatrix(np.vstack([seeded_vector(token, dim) for token in vocab]))


def similarity_rows_computed() -> int:
    """Number of similarity rows computed in this process so far."""
    return _similarity_rows_computed


def cosine_rows(embeddings: EmbeddingMatrix, indices: Sequence[int]) -> np.ndarray:
    """Cosine similarities of several vocabulary entries against the full vocabulary.

    Rows with zero norm are similar to nothing (similarity 0), including themselves.

    :return: array of shape (len(indices), k)
    """
    global _similarity_rows_computed

    values = embeddings.values
    k = len(values)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= k):
        raise BoundsError(f"Index out of range for {k} embedding rows")

    norms = np.linalg.norm(values, axis=1)
    dots = values[indices] @ values.T
    denominators = norms[indices, None] * norms[None, :]
    sims = np.divide(dots, denominators, out=np.zeros_like(dots), where=denominators > 0)

    nonzero = norms[indices] > 0
    sims[np.arange(len(indices))[nonzero], indices[nonzero]] = 1.0

    _similarity_rows_computed += len(indices)

    return np.clip(sims, -1.0, 1.0)


def cosine_row(embeddings: EmbeddingMatrix, j_star: int) -> SimilarityRow:
    """Cosine similarities between the word at `j_star` and every vocabulary entry."""
    if not 0 <= j_star < len(embeddings):
        raise BoundsError(f"Index {j_star} is out of range for {len(embeddings)} embedding rows")
    return SimilarityRow(target_index=j_star, sims=cosine_rows(embeddings, [j_star])[0])
