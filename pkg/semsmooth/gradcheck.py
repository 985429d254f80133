"""Central finite-difference verification of model gradients."""

import logging
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import torch

from .losses import LossKind
from .model import Batch, Seq2SeqTransformer, backward, batch_mean_loss
from .smoothing import TargetPolicy


log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoordinateCheck:
    parameter: str
    index: int
    analytic: float
    numeric: float
    relative_error: float


@dataclass
class GradientCheckReport:
    checks: list[CoordinateCheck] = field(default_factory=list)

    @property
    def max_relative_error(self) -> float:
        return max((check.relative_error for check in self.checks), default=0.0)


def relative_error(analytic: float, numeric: float, floor: float = 1e-5) -> float:
    """|a - n| / max(|a| + |n|, floor); the floor keeps vanishing gradients from dominating."""
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), floor)


def check_gradients(
    model: Seq2SeqTransformer,
    batch: Batch,
    policy: TargetPolicy,
    loss_kind: Union[LossKind, str],
    *,
    n_coords: int = 50,
    step: float = 1e-4,
    seed: int = 0,
) -> GradientCheckReport:
    """Compare `backward` against central differences on randomly sampled coordinates.

    The model is put into eval mode, so dropout doesn't interfere.
    """
    model.eval()
    analytic = backward(model, batch, policy, loss_kind).gradients
    analytic = {name: gradient.detach().clone() for name, gradient in analytic.items()}

    parameters = dict(model.named_parameters())
    names = list(parameters)
    sizes = np.array([parameters[name].numel() for name in names])
    offsets = np.concatenate(([0], np.cumsum(sizes)))

    rng = np.random.default_rng(seed)
    coordinates = rng.choice(offsets[-1], size=min(n_coords, offsets[-1]), replace=False)

    report = GradientCheckReport()
    with torch.no_grad():
        for coordinate in sorted(coordinates):
            which = int(np.searchsorted(offsets, coordinate, side="right") - 1)
            name = names[which]
            index = int(coordinate - offsets[which])
            flat = parameters[name].view(-1)

            original = flat[index].item()
            flat[index] = original + step
            loss_plus = batch_mean_loss(model, batch, policy, loss_kind)
            flat[index] = original - step
            loss_minus = batch_mean_loss(model, batch, policy, loss_kind)
            flat[index] = original

            numeric = (loss_plus - loss_minus) / (2 * step)
            exact = float(analytic[name].view(-1)[index])
            report.checks.append(
                CoordinateCheck(
                    parameter=name,
                    index=index,
                    analytic=exact,
                    numeric=numeric,
                    relative_error=relative_error(exact, numeric),
                )
            )

    log.debug("Gradient check: max relative error %.3g", report.max_relative_error)

    return report
