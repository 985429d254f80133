"""Soft-target distributions for label smoothing.

A target distribution keeps probability ``1 - s`` on the correct label and spreads the smoothing
mass ``s`` over the incorrect labels, either uniformly or in proportion to the cosine similarity
between the correct word and each candidate, after filtering candidates by a similarity threshold
and, optionally, by a synonym lexicon.
"""

import hashlib
import json
import logging
from abc import ABC, abstractmethod
from collections.abc import Mapping
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .embeddings import (
    SPECIAL_TOKENS,
    EmbeddingMatrix,
    SimilarityRow,
    Vocabulary,
    cosine_row,
    cosine_rows,
)
from .errors import BoundsError, ConfigError, ContractError, FormatError, numbered_lines


log = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-9
# Similarities this close to 1 count as "identical word" and are masked out.
DUPLICATE_SIMILARITY = 1 - 1e-6
EMPTY_SUPPORT_NOTE = "equivalent to vanilla CE targets"
TABLE_FORMAT_VERSION = 1
SIMILARITY_CHUNK_ROWS = 256


@dataclass(frozen=True)
class SmoothingConfig:
    s: float
    t: Optional[float] = None
    use_synonym_mask: bool = False

    def __post_init__(self):
        if not 0 <= self.s < 1:
            raise ConfigError(f"Smoothing mass s must lie in [0, 1), got {self.s}")
        if self.t is not None and not 0 <= self.t <= 1:
            raise ConfigError(f"Similarity threshold t must lie in [0, 1], got {self.t}")

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


class SynonymLexicon:
    """Symmetric synonym relation between token strings."""

    def __init__(self, entries: Optional[Mapping[str, Iterable[str]]] = None):
        closure: dict[str, set[str]] = {}
        for token, synonyms in (entries or {}).items():
            closure.setdefault(token, set())
            for synonym in synonyms:
                if synonym == token:
                    continue
                closure[token].add(synonym)
                closure.setdefault(synonym, set()).add(token)

        self.entries: dict[str, frozenset[str]] = {
            token: frozenset(synonyms) for token, synonyms in closure.items()
        }

    def synonyms(self, token: str) -> frozenset[str]:
        return self.entries.get(token, frozenset())

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SynonymLexicon):
            return NotImplemented
        return self.entries == other.entries

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(<{len(self)} entries>)"


def load_synonyms(path: Union[str, Path]) -> SynonymLexicon:
    """Load a synonym lexicon.

    Each line is ``token<TAB>syn1,syn2,...``; blank lines and lines starting with ``#`` are
    skipped. Tokens are lowercased to match tokenized corpus text. The relation is made symmetric
    and self-references are dropped.
    """
    path = Path(path)
    entries: dict[str, set[str]] = {}

    for lineno, line in numbered_lines(path):
        if not line.strip() or line.startswith("#"):
            continue
        if "\t" not in line:
            raise FormatError("Expected 'token<TAB>synonyms'", path=path, lineno=lineno)

        token, synonyms = line.split("\t", 1)
        token = token.strip().lower()
        if not token:
            raise FormatError("Empty token", path=path, lineno=lineno)

        entries.setdefault(token, set()).update(
            synonym.strip().lower() for synonym in synonyms.split(",") if synonym.strip()
        )

    return SynonymLexicon(entries)


def dump_synonyms(lexicon: SynonymLexicon, path: Union[str, Path]):
    with Path(path).open("w", encoding="utf-8") as fp:
        for token in sorted(lexicon.entries):
            synonyms = sorted(lexicon.entries[token])
            if synonyms:
                print(f"{token}\t{','.join(synonyms)}", file=fp)


@dataclass(frozen=True)
class TargetDistribution:
    """Sparse probability vector over the vocabulary for one correct label.

    `support` holds the incorrect labels with strictly positive probability.
    """

    correct_index: int
    correct_probability: float
    support: tuple[tuple[int, float], ...]
    vocab_size: int

    def __post_init__(self):
        if not 0 <= self.correct_index < self.vocab_size:
            raise BoundsError(
                f"Correct index {self.correct_index} out of range for {self.vocab_size} labels"
            )

        indices = [index for index, _ in self.support]
        if len(set(indices)) != len(indices):
            raise ContractError("Support indices must be distinct")
        if self.correct_index in indices:
            raise ContractError("The correct label can't be part of the support")
        if any(not 0 <= index < self.vocab_size for index in indices):
            raise BoundsError("Support index out of range")
        if any(probability <= 0 for _, probability in self.support):
            raise ContractError("Support probabilities must be strictly positive")
        if abs(self.total_mass - 1) > MASS_TOLERANCE:
            raise ContractError(f"Distribution mass is {self.total_mass}, not 1")

    @property
    def total_mass(self) -> float:
        return self.correct_probability + sum(probability for _, probability in self.support)

    @property
    def support_indices(self) -> frozenset[int]:
        return frozenset(index for index, _ in self.support)

    def probability(self, index: int) -> float:
        if index == self.correct_index:
            return self.correct_probability
        for support_index, probability in self.support:
            if support_index == index:
                return probability
        return 0.0

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.vocab_size)
        self.fill_dense(dense)
        return dense

    def fill_dense(self, row: np.ndarray):
        if self.support:
            indices, probabilities = zip(*self.support)
            row[list(indices)] = probabilities
        row[self.correct_index] = self.correct_probability


def one_hot(j_star: int, k: int) -> TargetDistribution:
    """Hard target: all probability on `j_star`."""
    if not 0 <= j_star < k:
        raise BoundsError(f"Index {j_star} is out of range for {k} labels")
    return TargetDistribution(
        correct_index=j_star, correct_probability=1.0, support=(), vocab_size=k
    )


def uniform_smoothed_distribution(j_star: int, k: int, s: float) -> TargetDistribution:
    """Plain label smoothing: `s` spread evenly over the other `k - 1` labels."""
    if k < 2:
        raise ContractError(f"Uniform smoothing needs at least 2 labels, got {k}")
    if not 0 <= s < 1:
        raise ConfigError(f"Smoothing mass s must lie in [0, 1), got {s}")
    if not 0 <= j_star < k:
        raise BoundsError(f"Index {j_star} is out of range for {k} labels")

    if s == 0:
        return one_hot(j_star, k)

    share = s / (k - 1)
    return TargetDistribution(
        correct_index=j_star,
        correct_probability=1 - s,
        support=tuple((m, share) for m in range(k) if m != j_star),
        vocab_size=k,
    )


def threshold_mask(simrow: SimilarityRow, t: float) -> np.ndarray:
    """Candidates more similar than `t`, excluding the word itself and exact duplicates.

    :return: 0/1 vector of length k
    """
    if not 0 <= t <= 1:
        raise ConfigError(f"Similarity threshold t must lie in [0, 1], got {t}")

    sims = simrow.sims
    mask = (sims > t) & (sims < DUPLICATE_SIMILARITY)
    mask[simrow.target_index] = False
    return mask.astype(np.int8)


def synonym_mask(target_token: str, vocab: Vocabulary, lexicon: SynonymLexicon) -> np.ndarray:
    """Vocabulary entries listed as synonyms of `target_token`.

    :return: 0/1 vector of length k, special tokens always 0
    """
    vocab.index(target_token)

    mask = np.zeros(len(vocab), dtype=np.int8)
    for synonym in lexicon.synonyms(target_token):
        if synonym in vocab:
            mask[vocab.index(synonym)] = 1
    mask[: len(SPECIAL_TOKENS)] = 0
    return mask


def build_target_distribution(
    j_star: int,
    simrow: SimilarityRow,
    config: SmoothingConfig,
    vocab: Vocabulary,
    lexicon: Optional[SynonymLexicon] = None,
) -> TargetDistribution:
    """Similarity-weighted soft target for the correct label `j_star`.

    The smoothing mass is split over the surviving candidates in proportion to their
    similarity. If no candidate survives the masks, the result is the one-hot target.
    """
    if config.t is None:
        raise ContractError(
            "Similarity weighting needs a threshold, use uniform_smoothed_distribution() or"
            " one_hot() instead"
        )
    if simrow.target_index != j_star:
        raise ContractError(
            f"Similarity row belongs to index {simrow.target_index}, not {j_star}"
        )
    if len(simrow) != len(vocab):
        raise ContractError(
            f"Similarity row has {len(simrow)} entries for a vocabulary of {len(vocab)}"
        )

    k = len(vocab)
    weights = simrow.sims * threshold_mask(simrow, config.t)

    if config.use_synonym_mask:
        if lexicon is None:
            raise ConfigError("The synonym mask needs a synonym lexicon")
        weights = weights * synonym_mask(vocab.token(j_star), vocab, lexicon)

    weights[: len(SPECIAL_TOKENS)] = 0
    weights[j_star] = 0

    total = weights.sum()
    if total <= 0 or config.s == 0:
        return one_hot(j_star, k)

    candidates = np.flatnonzero(weights > 0)
    probabilities = config.s * (weights[candidates] / total)

    return TargetDistribution(
        correct_index=j_star,
        correct_probability=1 - config.s,
        support=tuple(
            (int(index), float(probability))
            for index, probability in zip(candidates, probabilities)
            if probability > 0
        ),
        vocab_size=k,
    )


class TargetPolicy(ABC):
    """Maps every correct label to its target distribution."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @abstractmethod
    def distribution(self, j_star: int) -> TargetDistribution:
        ...

    @abstractmethod
    def describe(self) -> dict[str, Any]:
        ...

    def dense_rows(self, target_ids: Sequence[int]) -> np.ndarray:
        """Dense target vectors, one row per entry of `target_ids`."""
        rows = np.zeros((len(target_ids), self.vocab_size))
        for row, j_star in zip(rows, target_ids):
            self.distribution(int(j_star)).fill_dense(row)
        return rows


class HardTargets(TargetPolicy):
    def distribution(self, j_star: int) -> TargetDistribution:
        return one_hot(j_star, self.vocab_size)

    def describe(self) -> dict[str, Any]:
        return {"policy": "hard"}

    def dense_rows(self, target_ids: Sequence[int]) -> np.ndarray:
        rows = np.zeros((len(target_ids), self.vocab_size))
        rows[np.arange(len(target_ids)), np.asarray(target_ids, dtype=np.int64)] = 1.0
        return rows


class UniformSmoothing(TargetPolicy):
    def __init__(self, vocab: Vocabulary, s: float):
        super().__init__(vocab)
        if len(vocab) < 2:
            raise ContractError("Uniform smoothing needs at least 2 labels")
        if not 0 <= s < 1:
            raise ConfigError(f"Smoothing mass s must lie in [0, 1), got {s}")
        self.s = s

    def distribution(self, j_star: int) -> TargetDistribution:
        return uniform_smoothed_distribution(j_star, self.vocab_size, self.s)

    def describe(self) -> dict[str, Any]:
        return {"policy": "uniform", "s": self.s}

    def dense_rows(self, target_ids: Sequence[int]) -> np.ndarray:
        target_ids = np.asarray(target_ids, dtype=np.int64)
        rows = np.full((len(target_ids), self.vocab_size), self.s / (self.vocab_size - 1))
        rows[np.arange(len(target_ids)), target_ids] = 1 - self.s
        return rows


class TargetTable(TargetPolicy, Mapping):
    """Similarity-weighted target distributions, one per vocabulary entry.

    Distributions depend only on the word type, so they are computed once per vocabulary entry.
    Entries missing from the table are computed on first access if embeddings are available.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        config: SmoothingConfig,
        rows: Optional[Mapping[int, TargetDistribution]] = None,
        *,
        embeddings: Optional[EmbeddingMatrix] = None,
        lexicon: Optional[SynonymLexicon] = None,
    ):
        super().__init__(vocab)

        if config.t is None:
            raise ConfigError("A similarity target table needs a threshold t")
        if config.use_synonym_mask and lexicon is None and embeddings is not None:
            raise ConfigError("The synonym mask needs a synonym lexicon")
        if embeddings is not None and len(embeddings) != len(vocab):
            raise ContractError(
                f"Embedding matrix has {len(embeddings)} rows for a vocabulary of {len(vocab)}"
            )

        self.config = config
        self._rows: dict[int, TargetDistribution] = dict(rows or {})
        self._embeddings = embeddings
        self._lexicon = lexicon

    def _build(self, j_star: int, sims: Optional[np.ndarray] = None) -> TargetDistribution:
        if Vocabulary.is_special(j_star):
            return one_hot(j_star, self.vocab_size)
        if sims is None:
            simrow = cosine_row(self._embeddings, j_star)
        else:
            simrow = SimilarityRow(target_index=j_star, sims=sims)
        return build_target_distribution(j_star, simrow, self.config, self.vocab, self._lexicon)

    def __getitem__(self, j_star: int) -> TargetDistribution:
        try:
            return self._rows[j_star]
        except KeyError:
            pass

        if not 0 <= j_star < self.vocab_size:
            raise BoundsError(f"Index {j_star} is out of range for {self.vocab_size} labels")
        if self._embeddings is None:
            raise KeyError(j_star)

        self._rows[j_star] = distribution = self._build(j_star)
        return distribution

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.vocab_size))

    def __contains__(self, j_star) -> bool:
        if not isinstance(j_star, (int, np.integer)) or not 0 <= j_star < self.vocab_size:
            return False
        return j_star in self._rows or self._embeddings is not None

    def __len__(self) -> int:
        return self.vocab_size

    def distribution(self, j_star: int) -> TargetDistribution:
        return self[j_star]

    def describe(self) -> dict[str, Any]:
        return {"policy": "similarity", **self.config.as_dict()}

    def fill(self):
        """Compute every missing entry."""
        missing = [j for j in range(self.vocab_size) if j not in self._rows]
        if missing and self._embeddings is None:
            raise ContractError("Can't complete a target table without embeddings")

        for j in missing:
            if Vocabulary.is_special(j):
                self._rows[j] = one_hot(j, self.vocab_size)

        regular = [j for j in missing if not Vocabulary.is_special(j)]
        for start in range(0, len(regular), SIMILARITY_CHUNK_ROWS):
            chunk = regular[start : start + SIMILARITY_CHUNK_ROWS]
            for j_star, sims in zip(chunk, cosine_rows(self._embeddings, chunk)):
                self._rows[j_star] = self._build(j_star, sims)

    def to_json(self) -> dict[str, Any]:
        self.fill()
        rows = [
            [dist.correct_probability, [[index, prob] for index, prob in dist.support]]
            for dist in (self._rows[j] for j in range(self.vocab_size))
        ]
        return {
            "format_version": TABLE_FORMAT_VERSION,
            "config": self.config.as_dict(),
            "vocab": list(self.vocab.tokens),
            "rows": rows,
            "checksum": _table_checksum(self.config.as_dict(), list(self.vocab.tokens), rows),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any], path: Optional[Path] = None) -> "TargetTable":
        try:
            if data["format_version"] != TABLE_FORMAT_VERSION:
                raise FormatError(
                    f"Unsupported target table format version {data['format_version']!r}",
                    path=path,
                )
            config_data = data["config"]
            tokens = data["vocab"]
            rows = data["rows"]
            checksum = data["checksum"]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"Malformed target table: {exc}", path=path) from None

        if checksum != _table_checksum(config_data, tokens, rows):
            raise FormatError("Target table checksum mismatch", path=path)
        if not isinstance(rows, list) or not isinstance(tokens, list) or len(rows) != len(tokens):
            raise FormatError("Target table needs one row per vocabulary entry", path=path)

        # a consistent checksum doesn't make the content valid
        try:
            config = SmoothingConfig(**config_data)
            vocab = Vocabulary(tokens)
            k = len(vocab)
            distributions = {
                j: TargetDistribution(
                    correct_index=j,
                    correct_probability=correct_probability,
                    support=tuple((int(index), float(prob)) for index, prob in support),
                    vocab_size=k,
                )
                for j, (correct_probability, support) in enumerate(rows)
            }
        except (ConfigError, ContractError, BoundsError, TypeError, ValueError) as exc:
            raise FormatError(f"Malformed target table: {exc}", path=path) from None

        return cls(vocab, config, distributions)


def _table_checksum(config: Mapping[str, Any], tokens: Sequence[str], rows: Sequence) -> str:
    canonical = json.dumps([config, tokens, rows], sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def precompute_target_table(
    vocab: Vocabulary,
    embeddings: EmbeddingMatrix,
    config: SmoothingConfig,
    lexicon: Optional[SynonymLexicon] = None,
) -> TargetTable:
    """Build the target distribution of every vocabulary entry."""
    table = TargetTable(vocab, config, embeddings=embeddings, lexicon=lexicon)
    table.fill()
    log.debug("Built target table for %d vocabulary entries", len(vocab))
    return table


def dump_target_table(table: TargetTable, path: Union[str, Path]) -> str:
    """Write a target table as JSON.

    :return: the content checksum
    """
    data = table.to_json()
    with Path(path).open("w", encoding="utf-8") as fp:
        json.dump(data, fp, sort_keys=True, separators=(",", ":"))
        fp.write("\n")
    return data["checksum"]


def load_target_table(path: Union[str, Path]) -> TargetTable:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fp:
            data = json.load(fp)
    except UnicodeDecodeError:
        raise FormatError("Invalid UTF-8", path=path) from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"Invalid JSON: {exc}", path=path) from None
    return TargetTable.from_json(data, path=path)


def inspect_distribution(word: str, table: TargetPolicy) -> dict[str, Any]:
    """Describe the target distribution of `word` for display or plotting.

    The support is sorted by descending probability, ties by vocabulary index.
    """
    vocab = table.vocab
    j_star = vocab.index(word)
    distribution = table.distribution(j_star)

    support = sorted(distribution.support, key=lambda item: (-item[1], item[0]))
    record = {
        "word": word,
        "config": table.describe(),
        "correct_probability": distribution.correct_probability,
        "support": [[vocab.token(index), probability] for index, probability in support],
        "support_size": len(support),
    }
    if not support:
        record["note"] = EMPTY_SUPPORT_NOTE
    return record
