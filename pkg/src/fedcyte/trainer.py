# -*- coding: utf-8 -*-

"""Local training of one client.

Each optimizer step averages the focal-loss gradients of ``accumulation_steps``
micro-batches drawn from the class-balancing sampler, optionally adds the gradient
of the FedProx proximal term ``mu / 2 * ||w - w_global||^2``, clips the result to
``clip_max_norm`` and applies momentum SGD.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from more_itertools import take

from .aggregation import ClientUpdate
from .data import LabeledDataset, weighted_sampler
from .loss import FocalConfig
from .model import LabeledBatch, ModelSpec, loss_and_grad
from .params import ParamVector, l2_norm

__all__ = [
    'TrainerConfig',
    'StepCallback',
    'clip_gradient',
    'local_train',
]

logger = logging.getLogger(__name__)

#: Called after clipping with the global step index and the gradient about to be applied
StepCallback = Callable[[int, ParamVector], None]


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters of the local optimizer."""

    local_epochs: int = 5
    micro_batch: int = 8
    accumulation_steps: int = 4
    learning_rate: float = 0.01
    momentum: float = 0.9
    clip_max_norm: float = 1.0
    #: Proximal coefficient; 0 disables the term
    prox_mu: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for key in ('local_epochs', 'micro_batch', 'accumulation_steps'):
            value = getattr(self, key)
            if int(value) != value or value < 1:
                raise ValueError(f'{key} must be a positive integer: {value}')
        if self.learning_rate < 0:
            raise ValueError(f'learning_rate must be non-negative: {self.learning_rate}')
        if not 0 <= self.momentum < 1:
            raise ValueError(f'momentum must be in [0, 1): {self.momentum}')
        if not self.clip_max_norm > 0:
            raise ValueError(f'clip_max_norm must be positive: {self.clip_max_norm}')
        if self.prox_mu < 0:
            raise ValueError(f'prox_mu must be non-negative: {self.prox_mu}')

    @property
    def effective_batch(self) -> int:
        """Get the number of samples behind each optimizer step."""
        return self.micro_batch * self.accumulation_steps

    def steps_per_epoch(self, n: int) -> int:
        """Get the number of optimizer steps in one epoch over ``n`` samples."""
        return math.ceil(n / self.effective_batch)


def clip_gradient(g: ParamVector, max_norm: float) -> ParamVector:
    """Rescale a gradient so its Euclidean norm is at most ``max_norm``.

    >>> clip_gradient(ParamVector.from_values([3, 4]), 1.0).values.tolist()
    [0.6, 0.8]
    >>> clip_gradient(ParamVector.from_values([0.3, 0.4]), 1.0).values.tolist()
    [0.3, 0.4]
    """
    if not max_norm > 0:
        raise ValueError(f'max_norm must be positive: {max_norm}')
    norm = l2_norm(g)
    if norm <= max_norm:
        return g
    return g.with_values(g.values / norm * max_norm)


def local_train(
    spec: ModelSpec,
    w_global: ParamVector,
    train: LabeledDataset,
    cfg: TrainerConfig,
    focal: FocalConfig,
    *,
    client_id: str = 'client',
    epochs: Optional[int] = None,
    step_callback: Optional[StepCallback] = None,
) -> ClientUpdate:
    """Train a copy of the global model on one client's training split.

    :param spec: The model architecture
    :param w_global: The parameters to start from (and to stay close to when ``prox_mu > 0``)
    :param train: The client's training split
    :param cfg: The optimizer configuration. Its seed drives the sampler.
    :param focal: The focal loss configuration, with the client's alpha weights already set
    :param client_id: The identifier put on the returned update
    :param epochs: Overrides ``cfg.local_epochs``, e.g. for centralized training
    :param step_callback: Invoked after clipping on every optimizer step
    :returns: The trained parameters with ``n = len(train)``
    :raises ValueError: if the training split is empty
    """
    n = len(train)
    if n == 0:
        raise ValueError(f'[{client_id}] cannot train on an empty dataset')
    if epochs is None:
        epochs = cfg.local_epochs
    total_steps = epochs * cfg.steps_per_epoch(n)
    logger.debug('[%s] training %d steps on %d samples', client_id, total_steps, n)

    sampler = weighted_sampler(train, cfg.seed)
    mask = w_global.trainable_mask
    anchor = w_global.values
    w = w_global.values.copy()
    velocity = np.zeros_like(w)
    running_loss = 0.0
    for step in range(total_steps):
        gradient = np.zeros_like(w)
        current = w_global.with_values(w)
        for _ in range(cfg.accumulation_steps):
            indices = np.array(take(cfg.micro_batch, sampler), dtype=np.int64)
            batch = LabeledBatch(train.features[indices], train.labels[indices])
            loss, micro_gradient = loss_and_grad(spec, current, batch, focal)
            gradient += micro_gradient.values
            running_loss += loss
        gradient /= cfg.accumulation_steps
        if cfg.prox_mu > 0:
            gradient += np.where(mask, cfg.prox_mu * (w - anchor), 0.0)
        clipped = clip_gradient(w_global.with_values(gradient), cfg.clip_max_norm)
        if step_callback is not None:
            step_callback(step, clipped)
        velocity = cfg.momentum * velocity + clipped.values
        w = w - cfg.learning_rate * velocity

    if total_steps:
        mean_loss = running_loss / (total_steps * cfg.accumulation_steps)
        logger.debug('[%s] mean micro-batch loss %.4f', client_id, mean_loss)
    return ClientUpdate(client_id=client_id, params=w_global.with_values(w), n=n)
