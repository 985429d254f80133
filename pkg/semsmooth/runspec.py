"""Experiment cells: which loss and which target distributions a training run uses."""

import itertools
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterator, Mapping, Optional

from .embeddings import EmbeddingMatrix, Vocabulary
from .errors import ConfigError
from .losses import LossKind
from .smoothing import (
    HardTargets,
    SmoothingConfig,
    SynonymLexicon,
    TargetPolicy,
    UniformSmoothing,
    precompute_target_table,
)


log = logging.getLogger(__name__)

THREADS_ENV = "SEMSMOOTH_THREADS"

GRID_LOSSES = (LossKind.CE, LossKind.KL)
GRID_S = (None, 0.1, 0.2)
GRID_T = (None, 0.0, 0.5, 0.8)
GRID_W = (None, False, True)


@dataclass(frozen=True)
class RunSpec:
    """One training configuration.

    `s` is the smoothing mass, `t` the similarity threshold and `w` whether the synonym mask
    applies; None means the respective mechanism is off. A threshold needs smoothing, and the
    synonym mask is decided exactly for runs with a threshold.
    """

    loss_kind: LossKind = LossKind.CE
    s: Optional[float] = None
    t: Optional[float] = None
    w: Optional[bool] = None
    seed: int = 0
    corpus: Optional[Path] = None
    embeddings: Optional[Path] = None
    lexicon: Optional[Path] = None
    out_dir: Optional[Path] = None

    def __post_init__(self):
        object.__setattr__(self, "loss_kind", LossKind(self.loss_kind))
        for name in ("corpus", "embeddings", "lexicon", "out_dir"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, Path(value))

        if self.t is not None and self.s is None:
            raise ConfigError("A similarity threshold needs a smoothing mass (--s)")
        if self.w is not None and self.t is None:
            raise ConfigError("The synonym mask needs a similarity threshold (--t)")
        if self.t is not None and self.w is None:
            object.__setattr__(self, "w", False)

        if self.s is not None and not 0 <= self.s < 1:
            raise ConfigError(f"Smoothing mass s must lie in [0, 1), got {self.s}")
        if self.t is not None and not 0 <= self.t <= 1:
            raise ConfigError(f"Similarity threshold t must lie in [0, 1], got {self.t}")

    @property
    def is_baseline(self) -> bool:
        return self.t is None

    @property
    def cell_id(self) -> str:
        """Short name, unique within a grid, e.g. ``ce-s0.1-t0.5-w1``."""
        parts = [str(self.loss_kind)]
        if self.s is None:
            parts.append("hard")
        else:
            parts.append(f"s{self.s}")
        if self.t is not None:
            parts.append(f"t{self.t}")
            parts.append(f"w{int(self.w)}")
        return "-".join(parts)

    def smoothing_config(self) -> Optional[SmoothingConfig]:
        if self.t is None:
            return None
        return SmoothingConfig(s=self.s, t=self.t, use_synonym_mask=self.w)

    def with_paths(self, **paths) -> "RunSpec":
        return replace(self, **paths)

    def as_dict(self) -> dict[str, Any]:
        return {
            "loss": str(self.loss_kind),
            "s": self.s,
            "t": self.t,
            "w": self.w,
            "seed": self.seed,
            "paths": {
                name: str(getattr(self, name)) if getattr(self, name) is not None else None
                for name in ("corpus", "embeddings", "lexicon", "out_dir")
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunSpec":
        paths = data.get("paths") or {}
        return cls(
            loss_kind=data["loss"],
            s=data.get("s"),
            t=data.get("t"),
            w=data.get("w"),
            seed=data.get("seed", 0),
            **{name: value for name, value in paths.items() if value is not None},
        )


def grid_cells(
    base: Optional[RunSpec] = None, *, seed_per_cell: bool = False
) -> Iterator[RunSpec]:
    """Enumerate the legal (loss, s, t, w) combinations.

    Per loss that is the hard-target cell, one plain label smoothing cell per s and one semantic
    cell per (s, t, w) with w decided. All cells share the seed of `base` unless `seed_per_cell`
    is set, in which case cell number n uses base seed + n.
    """
    base = base or RunSpec()
    number = 0
    for loss_kind, s, t, w in itertools.product(GRID_LOSSES, GRID_S, GRID_T, GRID_W):
        if s is None and t is not None:
            continue
        if (t is None) != (w is None):
            continue

        yield replace(
            base,
            loss_kind=loss_kind,
            s=s,
            t=t,
            w=w,
            seed=base.seed + number if seed_per_cell else base.seed,
        )
        number += 1


def target_policy_for(
    spec: RunSpec,
    vocab: Vocabulary,
    embeddings: Optional[EmbeddingMatrix] = None,
    lexicon: Optional[SynonymLexicon] = None,
) -> TargetPolicy:
    """Choose hard targets, plain label smoothing or a similarity target table for a run."""
    if spec.s is None:
        return HardTargets(vocab)
    if spec.t is None:
        return UniformSmoothing(vocab, spec.s)

    if embeddings is None:
        raise ConfigError("Similarity-weighted targets need word vectors (--embeddings)")
    if spec.w and lexicon is None:
        raise ConfigError("The synonym mask needs a synonym lexicon (--lexicon)")

    table = precompute_target_table(vocab, embeddings, spec.smoothing_config(), lexicon)
    log.debug(
        "%s: %d of %d labels get a non-empty support",
        spec.cell_id,
        sum(1 for j in table if table[j].support),
        len(table),
    )
    return table


def thread_limit() -> Optional[int]:
    """The worker cap set through $SEMSMOOTH_THREADS, if any."""
    value = os.getenv(THREADS_ENV)
    if not value:
        return None
    try:
        limit = int(value)
    except ValueError:
        raise ConfigError(f"${THREADS_ENV} must be an integer, got {value!r}") from None
    if limit < 1:
        raise ConfigError(f"${THREADS_ENV} must be at least 1, got {limit}")
    return limit

