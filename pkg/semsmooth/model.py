"""A small transformer encoder-decoder for next-utterance prediction.

The model runs in double precision. Layers use the pre-norm arrangement, positional encodings are
sinusoidal, and dropout draws from an explicitly passed `torch.Generator` so that training is
reproducible without touching the global random state.
"""

import logging
import math
import pickle
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .corpus import MAX_CONTEXT, TrainingExample
from .embeddings import BOS, EOS, PAD, EmbeddingMatrix, Vocabulary
from .errors import ConfigError, ContractError, FormatError, NumericError
from .losses import LossKind, batch_loss
from .smoothing import TargetPolicy


log = logging.getLogger(__name__)

DTYPE = torch.float64
CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_layers: int = 2
    d_model: int = 64
    n_heads: int = 2
    d_ff: int = 128
    dropout: float = 0.1
    max_context: int = MAX_CONTEXT
    max_response: int = 64
    seed: int = 0
    project_embeddings: bool = True

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigError(f"vocab_size must be at least 2, got {self.vocab_size}")
        for name in ("n_layers", "d_model", "n_heads", "d_ff", "max_context", "max_response"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % self.n_heads:
            raise ConfigError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    @classmethod
    def paper(cls, vocab_size: int, **overrides) -> "ModelConfig":
        """3 layers, 300-dimensional hidden representation, 6 attention heads."""
        settings = dict(n_layers=3, d_model=300, n_heads=6, d_ff=1200, dropout=0.1)
        return cls(vocab_size=vocab_size, **{**settings, **overrides})

    @classmethod
    def desk(cls, vocab_size: int, **overrides) -> "ModelConfig":
        settings = dict(n_layers=2, d_model=64, n_heads=2, d_ff=128, dropout=0.1)
        return cls(vocab_size=vocab_size, **{**settings, **overrides})

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    batch_size: int = 64
    epochs: int = 15
    clip_norm_value: float = 1.0
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if not self.clip_norm_value > 0:
            raise ConfigError(f"clip_norm_value must be positive, got {self.clip_norm_value}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay can't be negative, got {self.weight_decay}")

    @classmethod
    def paper(cls, **overrides) -> "TrainConfig":
        return cls(**{**dict(batch_size=64, epochs=15), **overrides})

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        return cls(**{**dict(batch_size=16, epochs=5), **overrides})

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


def _dropout(
    x: torch.Tensor, p: float, training: bool, generator: Optional[torch.Generator]
) -> torch.Tensor:
    if not training or p == 0:
        return x
    keep = torch.empty_like(x).bernoulli_(1 - p, generator=generator)
    return x * keep / (1 - p)


def sinusoidal_positions(length: int, d_model: int) -> torch.Tensor:
    position = torch.arange(length, dtype=DTYPE).unsqueeze(1)
    div_term = torch.exp(torch.arange(0, d_model, 2, dtype=DTYPE) * (-math.log(10000.0) / d_model))
    table = torch.zeros(length, d_model, dtype=DTYPE)
    table[:, 0::2] = torch.sin(position * div_term)
    table[:, 1::2] = torch.cos(position * div_term)[:, : d_model // 2]
    return table


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, dropout: float):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.dropout = dropout
        self.w_q = nn.Linear(d_model, d_model)
        self.w_k = nn.Linear(d_model, d_model)
        self.w_v = nn.Linear(d_model, d_model)
        self.w_o = nn.Linear(d_model, d_model)

    def _split_heads(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, _ = x.shape
        return x.view(batch, length, self.n_heads, self.d_head).transpose(1, 2)

    def forward(
        self,
        query: torch.Tensor,
        key_value: torch.Tensor,
        allowed: torch.Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> torch.Tensor:
        q = self._split_heads(self.w_q(query))
        k = self._split_heads(self.w_k(key_value))
        v = self._split_heads(self.w_v(key_value))

        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        scores = scores.masked_fill(~allowed, torch.finfo(scores.dtype).min)
        weights = _dropout(torch.softmax(scores, dim=-1), self.dropout, self.training, generator)

        batch, _, length, _ = q.shape
        attended = (weights @ v).transpose(1, 2).reshape(batch, length, -1)
        return self.w_o(attended)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, dropout: float):
        super().__init__()
        self.dropout = dropout
        self.linear_1 = nn.Linear(d_model, d_ff)
        self.linear_2 = nn.Linear(d_ff, d_model)

    def forward(self, x: torch.Tensor, generator: Optional[torch.Generator] = None):
        hidden = _dropout(F.gelu(self.linear_1(x)), self.dropout, self.training, generator)
        return self.linear_2(hidden)


class EncoderLayer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.dropout = config.dropout
        self.norm_attention = nn.LayerNorm(config.d_model)
        self.attention = MultiHeadAttention(config.d_model, config.n_heads, config.dropout)
        self.norm_feed_forward = nn.LayerNorm(config.d_model)
        self.feed_forward = FeedForward(config.d_model, config.d_ff, config.dropout)

    def forward(self, x, allowed, generator=None):
        normed = self.norm_attention(x)
        x = x + _dropout(
            self.attention(normed, normed, allowed, generator),
            self.dropout,
            self.training,
            generator,
        )
        return x + _dropout(
            self.feed_forward(self.norm_feed_forward(x), generator),
            self.dropout,
            self.training,
            generator,
        )


class DecoderLayer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.dropout = config.dropout
        self.norm_self_attention = nn.LayerNorm(config.d_model)
        self.self_attention = MultiHeadAttention(config.d_model, config.n_heads, config.dropout)
        self.norm_cross_attention = nn.LayerNorm(config.d_model)
        self.cross_attention = MultiHeadAttention(config.d_model, config.n_heads, config.dropout)
        self.norm_feed_forward = nn.LayerNorm(config.d_model)
        self.feed_forward = FeedForward(config.d_model, config.d_ff, config.dropout)

    def forward(self, y, memory, causal, memory_allowed, generator=None):
        normed = self.norm_self_attention(y)
        y = y + _dropout(
            self.self_attention(normed, normed, causal, generator),
            self.dropout,
            self.training,
            generator,
        )
        y = y + _dropout(
            self.cross_attention(self.norm_cross_attention(y), memory, memory_allowed, generator),
            self.dropout,
            self.training,
            generator,
        )
        return y + _dropout(
            self.feed_forward(self.norm_feed_forward(y), generator),
            self.dropout,
            self.training,
            generator,
        )


class Seq2SeqTransformer(nn.Module):
    """Encoder over the speaker-tagged context, causal decoder over the response prefix."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Embedding(config.vocab_size, config.d_model)
        self.encoder_layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.n_layers))
        self.encoder_norm = nn.LayerNorm(config.d_model)
        self.decoder_layers = nn.ModuleList(DecoderLayer(config) for _ in range(config.n_layers))
        self.decoder_norm = nn.LayerNorm(config.d_model)
        self.output = nn.Linear(config.d_model, config.vocab_size)
        self.register_buffer(
            "positions",
            sinusoidal_positions(max(config.max_context, config.max_response), config.d_model),
            persistent=False,
        )
        self.to(DTYPE)

    def _embed(self, ids: torch.Tensor, generator) -> torch.Tensor:
        x = self.embedding(ids) + self.positions[: ids.shape[1]]
        return _dropout(x, self.config.dropout, self.training, generator)

    def encode(self, context_ids: torch.Tensor, generator=None) -> tuple[torch.Tensor, torch.Tensor]:
        if context_ids.shape[1] > self.config.max_context:
            raise ContractError(
                f"Context of {context_ids.shape[1]} tokens exceeds {self.config.max_context}"
            )
        allowed = (context_ids != PAD)[:, None, None, :]
        x = self._embed(context_ids, generator)
        for layer in self.encoder_layers:
            x = layer(x, allowed, generator)
        return self.encoder_norm(x), allowed

    def decode(self, memory, memory_allowed, prefix_ids: torch.Tensor, generator=None):
        length = prefix_ids.shape[1]
        if length > self.config.max_response:
            raise ContractError(
                f"Response prefix of {length} tokens exceeds {self.config.max_response}"
            )
        causal = torch.ones(length, length, dtype=torch.bool).tril()[None, None]
        y = self._embed(prefix_ids, generator)
        for layer in self.decoder_layers:
            y = layer(y, memory, causal, memory_allowed, generator)
        return self.output(self.decoder_norm(y))

    def forward(
        self,
        context_ids: torch.Tensor,
        prefix_ids: torch.Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> torch.Tensor:
        """Logits of shape (batch, prefix length, vocab_size).

        Dropout is active only in training mode and draws from `generator`.
        """
        memory, memory_allowed = self.encode(context_ids, generator)
        return self.decode(memory, memory_allowed, prefix_ids, generator)


def count_parameters(model: nn.Module) -> int:
    return sum(parameter.numel() for parameter in model.parameters())


def _xavier_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6 / (fan_in + fan_out))


def init_model(config: ModelConfig, embeddings: EmbeddingMatrix) -> Seq2SeqTransformer:
    """Create a model with deterministic initial weights.

    The token embedding table is filled from `embeddings`; if its dimension differs from
    `d_model`, the vectors pass through a seeded random linear projection first.
    """
    if len(embeddings) != config.vocab_size:
        raise ConfigError(
            f"Embedding matrix has {len(embeddings)} rows, vocabulary has {config.vocab_size}"
        )

    generator = torch.Generator().manual_seed(config.seed)
    table = torch.from_numpy(np.array(embeddings.values))

    if embeddings.dim != config.d_model:
        if not config.project_embeddings:
            raise ConfigError(
                f"Embedding dimension {embeddings.dim} differs from d_model {config.d_model}"
            )
        bound = _xavier_bound(embeddings.dim, config.d_model)
        projection = torch.empty(embeddings.dim, config.d_model, dtype=DTYPE)
        projection.uniform_(-bound, bound, generator=generator)
        table = table @ projection

    model = Seq2SeqTransformer(config)

    with torch.no_grad():
        for name, parameter in model.named_parameters():
            if name == "embedding.weight":
                parameter.copy_(table)
            elif parameter.dim() == 2:
                fan_out, fan_in = parameter.shape
                bound = _xavier_bound(fan_in, fan_out)
                parameter.uniform_(-bound, bound, generator=generator)
            elif name.rsplit(".", 1)[-1] == "weight":
                parameter.fill_(1.0)
            else:
                parameter.zero_()

    log.debug("Initialized model with %d parameters", count_parameters(model))

    return model


@dataclass
class Batch:
    context_ids: torch.Tensor
    prefix_ids: torch.Tensor
    target_ids: torch.Tensor

    def __len__(self):
        return self.context_ids.shape[0]

    @property
    def n_tokens(self) -> int:
        return int((self.target_ids != PAD).sum())


def _pad(sequences: Sequence[Sequence[int]]) -> torch.Tensor:
    length = max(1, max(len(sequence) for sequence in sequences))
    padded = torch.full((len(sequences), length), PAD, dtype=torch.int64)
    for row, sequence in zip(padded, sequences):
        row[: len(sequence)] = torch.as_tensor(sequence, dtype=torch.int64)
    return padded


def make_batch(examples: Sequence[TrainingExample]) -> Batch:
    """Pad examples into tensors; the decoder input is the response shifted right by [bos]."""
    if not examples:
        raise ContractError("Can't make an empty batch")
    return Batch(
        context_ids=_pad([example.context_ids for example in examples]),
        prefix_ids=_pad([(BOS,) + example.response_ids[:-1] for example in examples]),
        target_ids=_pad([example.response_ids for example in examples]),
    )


@dataclass
class BackwardResult:
    loss: float
    gradients: dict[str, torch.Tensor] = field(repr=False)


def backward(
    model: Seq2SeqTransformer,
    batch: Batch,
    policy: TargetPolicy,
    loss_kind: Union[LossKind, str],
    generator: Optional[torch.Generator] = None,
) -> BackwardResult:
    """Mean batch loss and its exact gradient with respect to every parameter.

    The gradient of the loss with respect to the logits is the closed form p - q; it is propagated
    through the network by autograd. Gradients are left in the parameters' ``.grad`` as well.
    """
    model.zero_grad(set_to_none=True)

    logits = model(batch.context_ids, batch.prefix_ids, generator)
    loss, logits_gradient = batch_loss(
        policy,
        batch.target_ids.reshape(-1),
        logits.reshape(-1, logits.shape[-1]),
        loss_kind,
    )

    if not math.isfinite(loss):
        raise NumericError("Non-finite loss", loss=loss)

    logits.backward(logits_gradient.reshape(logits.shape))

    gradients = {
        name: parameter.grad if parameter.grad is not None else torch.zeros_like(parameter)
        for name, parameter in model.named_parameters()
    }
    return BackwardResult(loss=loss, gradients=gradients)


def batch_mean_loss(
    model: Seq2SeqTransformer, batch: Batch, policy: TargetPolicy, loss_kind: Union[LossKind, str]
) -> float:
    """Mean batch loss without gradients, with the model in its current mode."""
    with torch.no_grad():
        logits = model(batch.context_ids, batch.prefix_ids)
        loss, _ = batch_loss(
            policy,
            batch.target_ids.reshape(-1),
            logits.reshape(-1, logits.shape[-1]),
            loss_kind,
        )
    return loss


def clip_gradients(model: nn.Module, max_norm: float) -> float:
    """Scale gradients so that their global norm is at most `max_norm`.

    :return: the global norm before clipping
    """
    return float(torch.nn.utils.clip_grad_norm_(model.parameters(), max_norm))


@dataclass
class TrainResult:
    model: Seq2SeqTransformer
    loss_curve: list[float]


def train(
    model: Seq2SeqTransformer,
    examples: Sequence[TrainingExample],
    policy: TargetPolicy,
    loss_kind: Union[LossKind, str],
    train_config: TrainConfig,
    *,
    epoch_callback: Optional[Callable[[int, float], None]] = None,
) -> TrainResult:
    """Train with AdamW on seeded shuffled mini-batches, clipping the global gradient norm.

    The loss curve holds the token-weighted mean training loss of each epoch.
    """
    if not examples:
        raise ContractError("Can't train on an empty example list")

    loss_kind = LossKind(loss_kind)
    shuffle_generator = torch.Generator().manual_seed(train_config.seed)
    dropout_generator = torch.Generator().manual_seed(train_config.seed + 1)
    optimizer = torch.optim.AdamW(
        model.parameters(),
        lr=train_config.learning_rate,
        weight_decay=train_config.weight_decay,
    )

    loss_curve = []
    for epoch in range(1, train_config.epochs + 1):
        model.train()
        order = torch.randperm(len(examples), generator=shuffle_generator).tolist()
        total_loss = 0.0
        total_tokens = 0

        for batch_index, start in enumerate(range(0, len(order), train_config.batch_size)):
            batch = make_batch([examples[i] for i in order[start : start + train_config.batch_size]])

            try:
                result = backward(model, batch, policy, loss_kind, dropout_generator)
            except NumericError as exc:
                raise NumericError(
                    "Training diverged", epoch=epoch, batch=batch_index, **exc.diagnostics
                ) from None

            clip_gradients(model, train_config.clip_norm_value)
            optimizer.step()

            log.debug("epoch %d batch %d: loss %.6f", epoch, batch_index, result.loss)

            total_loss += result.loss * batch.n_tokens
            total_tokens += batch.n_tokens

        epoch_loss = total_loss / total_tokens
        loss_curve.append(epoch_loss)
        log.info("epoch %d: loss %.6f", epoch, epoch_loss)

        if epoch_callback:
            epoch_callback(epoch, epoch_loss)

    model.eval()
    return TrainResult(model=model, loss_curve=loss_curve)


def greedy_decode(
    model: Seq2SeqTransformer, context_ids: Sequence[int], max_len: int
) -> list[int]:
    """Pick the most probable token at each step, the lowest index on ties.

    Decoding stops after ``[eos]`` (which is included) or after `max_len` tokens.
    """
    model.eval()
    max_len = min(max_len, model.config.max_response)
    output: list[int] = []

    with torch.no_grad():
        memory, memory_allowed = model.encode(_context_tensor(model, context_ids))
        prefix = [BOS]
        while len(output) < max_len:
            logits = model.decode(memory, memory_allowed, torch.tensor([prefix]))[0, -1]
            # torch.argmax returns the first maximal index
            token = int(torch.argmax(logits))
            output.append(token)
            if token == EOS:
                break
            prefix.append(token)

    return output


def beam_decode(
    model: Seq2SeqTransformer, context_ids: Sequence[int], max_len: int, width: int
) -> list[int]:
    """Beam search by total log-probability; a width of 1 is greedy decoding."""
    if width < 1:
        raise ConfigError(f"Beam width must be at least 1, got {width}")
    if width == 1:
        return greedy_decode(model, context_ids, max_len)

    model.eval()
    max_len = min(max_len, model.config.max_response)
    beams: list[tuple[float, list[int]]] = [(0.0, [])]
    finished: list[tuple[float, list[int]]] = []

    with torch.no_grad():
        memory, memory_allowed = model.encode(_context_tensor(model, context_ids))
        for _ in range(max_len):
            candidates = []
            for score, tokens in beams:
                prefix = torch.tensor([[BOS] + tokens])
                log_probs = torch.log_softmax(
                    model.decode(memory, memory_allowed, prefix)[0, -1], dim=-1
                )
                top = torch.topk(log_probs, min(width, log_probs.shape[0]))
                for log_prob, token in zip(top.values.tolist(), top.indices.tolist()):
                    candidates.append((score + log_prob, tokens + [token]))

            candidates.sort(key=lambda item: (-item[0], item[1]))
            beams = []
            for score, tokens in candidates[:width]:
                (finished if tokens[-1] == EOS else beams).append((score, tokens))
            if not beams:
                break

    finished.extend(beams)
    finished.sort(key=lambda item: (-item[0], item[1]))
    return finished[0][1]


def _context_tensor(model: Seq2SeqTransformer, context_ids: Sequence[int]) -> torch.Tensor:
    context_ids = list(context_ids)[-model.config.max_context :] or [PAD]
    return torch.tensor([context_ids], dtype=torch.int64)


def save_checkpoint(
    path: Union[str, Path],
    model: Seq2SeqTransformer,
    vocab: Vocabulary,
    metadata: Optional[dict[str, Any]] = None,
):
    """Write config, vocabulary, weights and run metadata (seed, epoch, run spec) to `path`."""
    if len(vocab) != model.config.vocab_size:
        raise ContractError("Vocabulary doesn't match the model")
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "model_config": model.config.as_dict(),
            "vocab": list(vocab.tokens),
            "state_dict": model.state_dict(),
            "metadata": metadata or {},
        },
        path,
    )


def load_checkpoint(
    path: Union[str, Path]
) -> tuple[Seq2SeqTransformer, Vocabulary, dict[str, Any]]:
    """Restore a model in eval mode, its vocabulary and the run metadata."""
    try:
        data = torch.load(path, map_location="cpu", weights_only=True)
    except (RuntimeError, EOFError, ValueError, pickle.UnpicklingError) as exc:
        raise FormatError(f"Can't read checkpoint: {exc}", path=path) from None

    try:
        if data["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise FormatError(
                f"Unsupported checkpoint version {data['format_version']!r}", path=path
            )
        config = ModelConfig(**data["model_config"])
        vocab = Vocabulary(data["vocab"])
        state_dict = data["state_dict"]
        metadata = data.get("metadata", {})
    except (KeyError, TypeError, ConfigError) as exc:
        raise FormatError(f"Malformed checkpoint: {exc}", path=path) from None

    if len(vocab) != config.vocab_size:
        raise FormatError("Checkpoint vocabulary doesn't match its model config", path=path)

    model = Seq2SeqTransformer(config)
    try:
        model.load_state_dict(state_dict)
    except RuntimeError as exc:
        raise FormatError(f"Checkpoint doesn't match its model config: {exc}", path=path) from None

    model.eval()
    return model, vocab, metadata
