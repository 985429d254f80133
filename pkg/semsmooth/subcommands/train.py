import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

from ..corpus import Conversation, TrainingExample, build_all_examples, build_vocab, load_corpus
from ..embeddings import (
    EOS,
    EmbeddingMatrix,
    Vocabulary,
    embeddings_for_vocab,
    load_embeddings,
    seeded_embeddings,
)
from ..errors import ConfigError
from ..model import (
    ModelConfig,
    Seq2SeqTransformer,
    TrainConfig,
    count_parameters,
    init_model,
    save_checkpoint,
    train,
)
from ..reports import metadata, write_json, write_loss_curve
from ..runspec import RunSpec, target_policy_for
from ..smoothing import SynonymLexicon, load_synonyms
from . import (
    add_run_arguments,
    add_training_arguments,
    runspec_from_args,
    train_overrides_from_args,
)


log = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.pt"
LOSS_CURVE_FILE = "loss_curve.csv"
RUNSPEC_FILE = "runspec.json"


def register_subcommand(subparsers):
    subcmd_name = "train"

    train_parser = subparsers.add_parser(
        subcmd_name,
        help="Train a response generation model for one run configuration",
    )

    add_run_arguments(train_parser, corpus_required=True)
    add_training_arguments(train_parser)

    return subcmd_name


@dataclass
class TrainingData:
    conversations: list[Conversation]
    vocab: Vocabulary
    embeddings: Optional[EmbeddingMatrix]
    lexicon: Optional[SynonymLexicon]


def load_training_data(
    spec: RunSpec,
    *,
    min_count: int = 1,
    conversations: Optional[Sequence[Conversation]] = None,
) -> TrainingData:
    """Read the corpus, word vectors and lexicon named by `spec`.

    Word vectors are rearranged to the corpus vocabulary. Pass `conversations` to train on
    something other than the corpus file, e.g. the training part of a split.
    """
    if conversations is None:
        if spec.corpus is None:
            raise ConfigError("No corpus given (--corpus)")
        conversations = load_corpus(spec.corpus)

    vocab = build_vocab(conversations, min_count)

    embeddings = None
    if spec.embeddings is not None:
        source_vocab, source = load_embeddings(spec.embeddings)
        embeddings = embeddings_for_vocab(vocab, source_vocab, source)

    lexicon = load_synonyms(spec.lexicon) if spec.lexicon is not None else None

    return TrainingData(
        conversations=list(conversations), vocab=vocab, embeddings=embeddings, lexicon=lexicon
    )


def configs_for_preset(
    preset: str,
    vocab_size: int,
    seed: int,
    train_overrides: Optional[dict[str, Any]] = None,
    model_overrides: Optional[dict[str, Any]] = None,
) -> tuple[ModelConfig, TrainConfig]:
    try:
        model_preset = getattr(ModelConfig, preset)
        train_preset = getattr(TrainConfig, preset)
    except AttributeError:
        raise ConfigError(f"Unknown preset: {preset!r}") from None

    model_config = model_preset(vocab_size, **{"seed": seed, **(model_overrides or {})})
    train_config = train_preset(**{"seed": seed, **(train_overrides or {})})
    return model_config, train_config


def fit_examples(
    examples: Sequence[TrainingExample], config: ModelConfig
) -> list[TrainingExample]:
    """Cut responses longer than the decoder allows, keeping the final ``[eos]``."""
    fitted = []
    cut = 0
    for example in examples:
        if len(example.response_ids) > config.max_response:
            cut += 1
            example = TrainingExample(
                context_ids=example.context_ids,
                response_ids=example.response_ids[: config.max_response - 1] + (EOS,),
            )
        fitted.append(example)

    if cut:
        log.warning("Cut %d responses to %d tokens", cut, config.max_response)

    return fitted


@dataclass
class TrainedRun:
    spec: RunSpec
    model: Seq2SeqTransformer
    vocab: Vocabulary
    loss_curve: list[float]
    checkpoint_path: Path
    loss_curve_path: Path
    runspec_path: Path


def train_run(
    spec: RunSpec,
    *,
    preset: str = "desk",
    min_count: int = 1,
    train_overrides: Optional[dict[str, Any]] = None,
    model_overrides: Optional[dict[str, Any]] = None,
    conversations: Optional[Sequence[Conversation]] = None,
) -> TrainedRun:
    """Train one model and write its checkpoint, loss curve and run record.

    :param spec: what to train; ``spec.out_dir`` receives the files
    :param preset: "desk" or "paper" model and training settings
    :param min_count: minimum token frequency for the vocabulary
    :param train_overrides: replacements for the preset's training settings
    :param model_overrides: replacements for the preset's model settings
    :param conversations: training conversations, instead of reading ``spec.corpus``
    :return: the trained model and where its files went
    """
    if spec.out_dir is None:
        raise ConfigError("No output directory given (--out)")

    started = time.monotonic()

    data = load_training_data(spec, min_count=min_count, conversations=conversations)
    model_config, train_config = configs_for_preset(
        preset, len(data.vocab), spec.seed, train_overrides, model_overrides
    )
    policy = target_policy_for(spec, data.vocab, data.embeddings, data.lexicon)
    examples = fit_examples(
        build_all_examples(data.conversations, data.vocab, model_config.max_context),
        model_config,
    )

    initial_embeddings = data.embeddings
    if initial_embeddings is None:
        initial_embeddings = seeded_embeddings(data.vocab, model_config.d_model)
    model = init_model(model_config, initial_embeddings)
    n_parameters = count_parameters(model)

    log.info(
        "%s: %d examples, %d vocabulary entries, %d parameters",
        spec.cell_id,
        len(examples),
        len(data.vocab),
        n_parameters,
    )

    result = train(model, examples, policy, spec.loss_kind, train_config)

    record = {
        "runspec": spec.as_dict(),
        "preset": preset,
        "min_count": min_count,
        "model_config": model_config.as_dict(),
        "train_config": train_config.as_dict(),
        "target_policy": policy.describe(),
        "parameters": n_parameters,
    }

    out_dir = spec.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / CHECKPOINT_FILE
    loss_curve_path = out_dir / LOSS_CURVE_FILE
    runspec_path = out_dir / RUNSPEC_FILE

    save_checkpoint(checkpoint_path, result.model, data.vocab, record)
    write_loss_curve(result.loss_curve, loss_curve_path)
    write_json(
        {
            **record,
            "loss_curve": result.loss_curve,
            "metadata": metadata(time.monotonic() - started),
        },
        runspec_path,
    )

    return TrainedRun(
        spec=spec,
        model=result.model,
        vocab=data.vocab,
        loss_curve=result.loss_curve,
        checkpoint_path=checkpoint_path,
        loss_curve_path=loss_curve_path,
        runspec_path=runspec_path,
    )


def main(args):
    """Main method."""
    spec = runspec_from_args(args)
    run = train_run(
        spec,
        preset=args.preset or "desk",
        min_count=args.min_count or 1,
        train_overrides=train_overrides_from_args(args),
    )
    log.info("Wrote %s, %s and %s", run.checkpoint_path, run.loss_curve_path, run.runspec_path)
