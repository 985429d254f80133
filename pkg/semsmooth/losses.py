"""Soft-target cross-entropy and KL-divergence losses with closed-form gradients.

All losses are in nats. For a target distribution q and logits z with p = softmax(z), both losses
have the gradient p - q with respect to z; they differ by the entropy H(q), which is constant in z.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np
import torch

from .embeddings import PAD
from .errors import ContractError, NumericError
from .smoothing import TargetDistribution, TargetPolicy


ArrayLike = Union[torch.Tensor, np.ndarray, Sequence[float]]


class LossKind(str, Enum):
    CE = "ce"
    KL = "kl"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class LossResult:
    loss: float
    gradient: torch.Tensor


def _as_logits(logits: ArrayLike) -> torch.Tensor:
    z = torch.as_tensor(logits, dtype=torch.float64)
    if not torch.all(torch.isfinite(z)):
        raise NumericError("Logits contain non-finite values")
    return z


def _as_target(q: Union[TargetDistribution, ArrayLike], k: int) -> torch.Tensor:
    if isinstance(q, TargetDistribution):
        if q.vocab_size != k:
            raise ContractError(f"Target distribution over {q.vocab_size} labels, logits over {k}")
        return torch.from_numpy(q.to_dense())

    q = torch.as_tensor(q, dtype=torch.float64)
    if q.shape[-1] != k:
        raise ContractError(f"Target distribution over {q.shape[-1]} labels, logits over {k}")
    return q


def log_softmax(logits: ArrayLike) -> torch.Tensor:
    z = _as_logits(logits)
    return z - torch.logsumexp(z, dim=-1, keepdim=True)


def softmax(logits: ArrayLike) -> torch.Tensor:
    """Probabilities exp(z - max z) / sum(exp(z - max z)) along the last axis."""
    return torch.exp(log_softmax(logits))


def entropy(q: Union[TargetDistribution, ArrayLike]) -> float:
    """H(q) in nats, with 0 log 0 = 0."""
    if isinstance(q, TargetDistribution):
        q = q.to_dense()
    q = torch.as_tensor(q, dtype=torch.float64)
    return float(-torch.xlogy(q, q).sum())


def cross_entropy_soft(q: Union[TargetDistribution, ArrayLike], logits: ArrayLike) -> LossResult:
    """-sum q log softmax(z), computed through log-sum-exp."""
    z = _as_logits(logits)
    q = _as_target(q, z.shape[-1])
    log_p = log_softmax(z)
    return LossResult(loss=float(-(q * log_p).sum()), gradient=torch.exp(log_p) - q)


def kl_divergence_loss(q: Union[TargetDistribution, ArrayLike], logits: ArrayLike) -> LossResult:
    """sum q (log q - log softmax(z)), with 0 log 0 = 0."""
    z = _as_logits(logits)
    q = _as_target(q, z.shape[-1])
    log_p = log_softmax(z)
    loss = (torch.xlogy(q, q) - q * log_p).sum()
    return LossResult(loss=float(loss), gradient=torch.exp(log_p) - q)


_PER_ROW_LOSS = {
    LossKind.CE: lambda q, log_p: -(q * log_p).sum(dim=-1),
    LossKind.KL: lambda q, log_p: (torch.xlogy(q, q) - q * log_p).sum(dim=-1),
}


def batch_loss(
    policy: TargetPolicy,
    target_ids: ArrayLike,
    logits: ArrayLike,
    loss_kind: Union[LossKind, str],
    *,
    pad_id: int = PAD,
) -> tuple[float, torch.Tensor]:
    """Mean loss over the non-pad target positions of a batch.

    :param policy: supplies the target distribution of each correct label
    :param target_ids: correct label per position, shape (n,)
    :param logits: one row of logits per position, shape (n, k)
    :param loss_kind: CE or KL
    :return: the mean loss and its gradient with respect to `logits`; pad rows get zero
             gradient
    """
    loss_kind = LossKind(loss_kind)
    target_ids = torch.as_tensor(target_ids, dtype=torch.int64).reshape(-1)
    if isinstance(logits, torch.Tensor):
        logits = logits.detach()
    z = _as_logits(logits)
    z = z.reshape(-1, z.shape[-1])

    if z.shape[0] != target_ids.shape[0]:
        raise ContractError(f"{z.shape[0]} logits rows for {target_ids.shape[0]} targets")
    if z.shape[-1] != policy.vocab_size:
        raise ContractError(
            f"Logits over {z.shape[-1]} labels, targets over {policy.vocab_size}"
        )

    keep = target_ids != pad_id
    count = int(keep.sum())
    if not count:
        raise ContractError("Batch consists of padding only")

    q = torch.from_numpy(policy.dense_rows(target_ids[keep].tolist()))
    log_p = log_softmax(z[keep])

    loss = _PER_ROW_LOSS[loss_kind](q, log_p).sum() / count

    gradient = torch.zeros_like(z)
    gradient[keep] = (torch.exp(log_p) - q) / count

    return float(loss), gradient
