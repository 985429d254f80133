"""Argument handling shared between sub-commands."""

import argparse
from typing import Any, Optional

from ..errors import ConfigError
from ..losses import LossKind
from ..runspec import RunSpec


PRESETS = ("desk", "paper")
NONE_VALUES = ("none", "na")


def optional_float(value: str) -> Optional[float]:
    """Parse a float, or ``none``/``NA`` for "switched off"."""
    if value.lower() in NONE_VALUES:
        return None
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number or 'none': {value!r}") from None


def add_run_arguments(parser: argparse.ArgumentParser, *, corpus_required: bool = False):
    """Flags describing one run: inputs, loss, smoothing settings, seed and output directory."""
    parser.add_argument(
        "--corpus", required=corpus_required, help="Conversations as JSON lines of {'turns': [...]}"
    )
    parser.add_argument("--embeddings", help="Word vectors in GloVe text layout")
    parser.add_argument("--lexicon", help="Synonym lexicon, 'token<TAB>syn1,syn2,...' per line")
    parser.add_argument(
        "--loss",
        choices=[kind.value for kind in LossKind],
        default=LossKind.CE.value,
        help="Training loss",
    )
    parser.add_argument(
        "--s",
        type=optional_float,
        default=None,
        help="Smoothing mass moved off the correct label ('none': hard targets)",
    )
    parser.add_argument(
        "--t",
        type=optional_float,
        default=None,
        help="Cosine similarity threshold ('none': uniform smoothing)",
    )
    parser.add_argument(
        "--wordnet",
        type=int,
        choices=(0, 1),
        default=None,
        help="Restrict the smoothing mass to lexicon synonyms (needs --t)",
    )
    parser.add_argument("--seed", type=int, default=0, help="Random seed")
    parser.add_argument("--out", help="Output directory")


def add_training_arguments(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--preset",
        choices=PRESETS,
        default="desk",
        help="Model and training size: 'paper' for the full-scale settings",
    )
    parser.add_argument("--epochs", type=int, help="Override the number of epochs of the preset")
    parser.add_argument("--batch-size", type=int, help="Override the batch size of the preset")
    parser.add_argument(
        "--learning-rate", type=float, help="Override the learning rate of the preset"
    )
    parser.add_argument(
        "--min-count", type=int, default=1, help="Minimum token frequency for the vocabulary"
    )


def runspec_from_args(args: Any) -> RunSpec:
    if args.wordnet is None:
        w = None
    else:
        w = bool(args.wordnet)

    try:
        return RunSpec(
            loss_kind=args.loss or LossKind.CE,
            s=args.s,
            t=args.t,
            w=w,
            seed=args.seed or 0,
            corpus=args.corpus,
            embeddings=args.embeddings,
            lexicon=args.lexicon,
            out_dir=args.out,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def train_overrides_from_args(args: Any) -> dict[str, Any]:
    overrides = {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
    }
    return {key: value for key, value in overrides.items() if value is not None}
