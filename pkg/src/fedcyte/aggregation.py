# -*- coding: utf-8 -*-

"""Server-side aggregation strategies.

=========  ===============================================================
Strategy   Server rule
=========  ===============================================================
FedAvg     sample-size-weighted mean of client parameters
FedMedian  coordinate-wise median, after optional IQR filtering of updates
FedProx    same as FedAvg (the proximal term lives in the client trainer)
FedOpt     server-side Adam on the pseudo-gradient ``FedAvg(updates) - w``
=========  ===============================================================

Every function here is pure. FedOpt's moment estimates travel in an explicit
:class:`ServerOptState` value that the caller threads from round to round.
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .params import DimensionError, ParamVector

__all__ = [
    'ClientUpdate',
    'ServerOptState',
    'StrategyKind',
    'FedOptConfig',
    'FedMedianConfig',
    'AggregationStrategy',
    'fedavg',
    'fedmedian',
    'fedprox_aggregate',
    'fedopt_step',
    'aggregate',
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClientUpdate:
    """The only thing a client ever sends to the server."""

    client_id: str
    params: ParamVector
    #: The number of training samples behind the update
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f'[{self.client_id}] sample count must be a positive integer: {self.n}')


@dataclass(frozen=True)
class ServerOptState:
    """First and second moment estimates of the server-side Adam optimizer."""

    m: ParamVector
    v: ParamVector
    step: int = 0

    @classmethod
    def fresh(cls, w: ParamVector) -> 'ServerOptState':
        """Get a zero-initialized state matching the given parameters."""
        zeros = w.zeros_like()
        return cls(m=zeros, v=zeros, step=0)


class StrategyKind(str, enum.Enum):
    """The available aggregation strategies."""

    fedavg = 'fedavg'
    fedmedian = 'fedmedian'
    fedprox = 'fedprox'
    fedopt = 'fedopt'

    @property
    def label(self) -> str:
        """Get the conventional spelling of the strategy name."""
        return _LABELS[self]


_LABELS = {
    StrategyKind.fedavg: 'FedAvg',
    StrategyKind.fedmedian: 'FedMedian',
    StrategyKind.fedprox: 'FedProx',
    StrategyKind.fedopt: 'FedOpt',
}


@dataclass(frozen=True)
class FedOptConfig:
    """Hyperparameters of the server-side Adam optimizer."""

    server_lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    #: Adaptivity constant added to the root of the second moment
    tau: float = 1e-3

    def __post_init__(self):
        if self.server_lr < 0:
            raise ValueError(f'server_lr must be non-negative: {self.server_lr}')
        for key in ('beta1', 'beta2'):
            if not 0 <= getattr(self, key) < 1:
                raise ValueError(f'{key} must be in [0, 1): {getattr(self, key)}')
        if not self.tau > 0:
            raise ValueError(f'tau must be positive: {self.tau}')


@dataclass(frozen=True)
class FedMedianConfig:
    """Settings for the outlier filter that runs before the median."""

    iqr_filter: bool = True
    #: Updates further than ``iqr_k`` interquartile ranges outside the quartiles are dropped
    iqr_k: float = 1.5

    def __post_init__(self):
        if not self.iqr_k > 0:
            raise ValueError(f'iqr_k must be positive: {self.iqr_k}')


@dataclass(frozen=True)
class AggregationStrategy:
    """A strategy and its hyperparameters."""

    kind: StrategyKind = StrategyKind.fedavg
    fedopt: FedOptConfig = field(default_factory=FedOptConfig)
    fedmedian: FedMedianConfig = field(default_factory=FedMedianConfig)
    #: Proximal coefficient handed to the client trainer when the strategy is FedProx
    fedprox_mu: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, 'kind', StrategyKind(self.kind))
        if self.fedprox_mu < 0:
            raise ValueError(f'fedprox_mu must be non-negative: {self.fedprox_mu}')

    @property
    def label(self) -> str:
        """Get the conventional spelling of the strategy name."""
        return self.kind.label

    @property
    def client_prox_mu(self) -> float:
        """Get the proximal coefficient clients should use under this strategy."""
        return self.fedprox_mu if self.kind is StrategyKind.fedprox else 0.0


def _stack(updates: Sequence[ClientUpdate]) -> Tuple[np.ndarray, np.ndarray]:
    if not updates:
        raise ValueError('cannot aggregate an empty list of updates')
    first = updates[0].params
    for update in updates[1:]:
        first.check_compatible(update.params)
    return np.stack([update.params.values for update in updates]), first.trainable_mask


def _restore_frozen(values: np.ndarray, matrix: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # frozen coordinates are identical across clients, so any row carries them exactly
    return np.where(mask, values, matrix[0])


def fedavg(updates: Sequence[ClientUpdate]) -> ParamVector:
    """Average client parameters weighted by their sample counts.

    :param updates: At least one update, all of the same length and mask
    :returns: ``sum_i (n_i / n) w_i``
    :raises ValueError: if there are no updates
    :raises DimensionError: if the updates differ in length or mask
    """
    matrix, mask = _stack(updates)
    counts = np.array([update.n for update in updates], dtype=np.float64)
    weights = counts / counts.sum()
    averaged = np.tensordot(weights, matrix, axes=1)
    return ParamVector(values=_restore_frozen(averaged, matrix, mask), trainable_mask=mask)


def _iqr_survivors(matrix: np.ndarray, k: float) -> np.ndarray:
    """Get the indices of updates whose distance to the mean update is not an IQR outlier."""
    distances = np.linalg.norm(matrix - matrix.mean(axis=0), axis=1)
    q1, q3 = np.percentile(distances, [25, 75])
    iqr = q3 - q1
    keep = np.flatnonzero((distances >= q1 - k * iqr) & (distances <= q3 + k * iqr))
    if keep.size < 2:
        keep = np.sort(np.argsort(distances, kind='stable')[:2])
    return keep


def fedmedian(updates: Sequence[ClientUpdate], cfg: Optional[FedMedianConfig] = None) -> ParamVector:
    """Take the coordinate-wise median of client parameters, ignoring sample counts.

    When filtering is enabled and there are at least four updates, each update is
    scored by its L2 distance to the coordinate-wise mean and updates outside
    ``[Q1 - k IQR, Q3 + k IQR]`` of those scores are dropped, keeping at least two.
    With an even number of survivors, the median is the midpoint of the two middle values.

    :param updates: At least one update
    :param cfg: The filter settings
    :returns: The median parameters
    :raises ValueError: if there are no updates
    """
    if cfg is None:
        cfg = FedMedianConfig()
    matrix, mask = _stack(updates)
    if cfg.iqr_filter and len(updates) >= 4:
        survivors = _iqr_survivors(matrix, cfg.iqr_k)
        if survivors.size < len(updates):
            dropped = sorted(set(range(len(updates))) - set(survivors.tolist()))
            logger.info('dropped outlier updates from %s', [updates[i].client_id for i in dropped])
        matrix = matrix[survivors]
    elif cfg.iqr_filter:
        logger.debug('IQR filtering needs at least 4 updates, got %d', len(updates))
    median = np.median(matrix, axis=0)
    return ParamVector(values=_restore_frozen(median, matrix, mask), trainable_mask=mask)


def fedprox_aggregate(updates: Sequence[ClientUpdate]) -> ParamVector:
    """Aggregate FedProx updates, which on the server is exactly :func:`fedavg`."""
    return fedavg(updates)


def fedopt_step(
    w_prev: ParamVector,
    updates: Sequence[ClientUpdate],
    state: ServerOptState,
    cfg: Optional[FedOptConfig] = None,
) -> Tuple[ParamVector, ServerOptState]:
    """Apply one step of server-side Adam to the averaged client update.

    The pseudo-gradient is ``delta = fedavg(updates) - w_prev``. With bias-corrected
    moments ``m_hat`` and ``v_hat``, the new parameters are
    ``w_prev + server_lr * m_hat / (sqrt(v_hat) + tau)`` on trainable coordinates.

    :param w_prev: The current global parameters
    :param updates: The client updates of this round
    :param state: The optimizer state from the previous round
    :param cfg: The optimizer hyperparameters
    :returns: The new global parameters and the new optimizer state
    :raises DimensionError: if the state, updates, and parameters do not line up
    """
    if cfg is None:
        cfg = FedOptConfig()
    w_prev.check_compatible(state.m)
    w_prev.check_compatible(state.v)
    averaged = fedavg(updates)
    try:
        w_prev.check_compatible(averaged)
    except DimensionError as e:
        raise DimensionError(f'client updates do not match the global model: {e}') from None

    mask = w_prev.trainable_mask
    delta = np.where(mask, averaged.values - w_prev.values, 0.0)
    m = cfg.beta1 * state.m.values + (1.0 - cfg.beta1) * delta
    v = cfg.beta2 * state.v.values + (1.0 - cfg.beta2) * delta ** 2
    step = state.step + 1
    m_hat = m / (1.0 - cfg.beta1 ** step)
    v_hat = v / (1.0 - cfg.beta2 ** step)
    update = cfg.server_lr * m_hat / (np.sqrt(v_hat) + cfg.tau)
    w_next = np.where(mask, w_prev.values + update, w_prev.values)
    return w_prev.with_values(w_next), ServerOptState(m=state.m.with_values(m), v=state.v.with_values(v), step=step)


def aggregate(
    strategy: AggregationStrategy,
    w_prev: ParamVector,
    updates: Sequence[ClientUpdate],
    state: Optional[ServerOptState] = None,
) -> Tuple[ParamVector, Optional[ServerOptState]]:
    """Run the server side of one round for any strategy.

    :param strategy: The aggregation strategy
    :param w_prev: The global parameters broadcast at the start of the round
    :param updates: The client updates
    :param state: The server optimizer state (FedOpt only; created fresh if None)
    :returns: The new global parameters and the (possibly unchanged) optimizer state
    """
    if strategy.kind is StrategyKind.fedavg:
        return fedavg(updates), state
    if strategy.kind is StrategyKind.fedmedian:
        return fedmedian(updates, strategy.fedmedian), state
    if strategy.kind is StrategyKind.fedprox:
        return fedprox_aggregate(updates), state
    if state is None:
        state = ServerOptState.fresh(w_prev)
    return fedopt_step(w_prev, updates, state, strategy.fedopt)
