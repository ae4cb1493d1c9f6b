# -*- coding: utf-8 -*-

"""Small differentiable reference classifiers with analytic gradients.

Two model kinds are available:

- ``softmax_regression``: logits ``z = x W + b``
- ``mlp1h``: one tanh hidden layer, logits ``z = tanh(x W1 + b1) W2 + b2``

Parameters are stored in a flat :class:`fedcyte.params.ParamVector` in the order the
layers are applied (weights row-major, then biases). The leading
``floor(frozen_fraction * parameter_count)`` coordinates are frozen, which mirrors
fine-tuning only the later layers of a larger network.
"""

import enum
import logging
import math
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np

from .loss import FocalConfig, focal_terms
from .params import DimensionError, ParamVector

__all__ = [
    'ModelKind',
    'ModelSpec',
    'LabeledBatch',
    'parameter_count',
    'frozen_count',
    'init_params',
    'forward',
    'predict',
    'loss_and_grad',
]

logger = logging.getLogger(__name__)


class ModelKind(str, enum.Enum):
    """The kinds of reference model."""

    softmax_regression = 'softmax_regression'
    mlp1h = 'mlp1h'


#: Default fraction of frozen leading coordinates for each model kind
DEFAULT_FROZEN_FRACTION = {
    ModelKind.softmax_regression: 0.0,
    ModelKind.mlp1h: 0.5,
}


@dataclass(frozen=True)
class ModelSpec:
    """The architecture of a reference model."""

    kind: ModelKind
    input_dim: int
    num_classes: int
    #: Width of the hidden layer (only used by ``mlp1h``)
    hidden_dim: int = 32
    #: Fraction of leading coordinates marked non-trainable. Defaults depend on the kind.
    frozen_fraction: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', ModelKind(self.kind))
        for key in ('input_dim', 'num_classes', 'hidden_dim'):
            value = getattr(self, key)
            if int(value) != value or value < 1:
                raise ValueError(f'{key} must be a positive integer: {value}')
        if self.frozen_fraction is None:
            object.__setattr__(self, 'frozen_fraction', DEFAULT_FROZEN_FRACTION[self.kind])
        if not 0.0 <= self.frozen_fraction < 1.0:
            raise ValueError(f'frozen_fraction must be in [0, 1): {self.frozen_fraction}')

    @property
    def label(self) -> str:
        """Get a short human-readable name for reports."""
        if self.kind is ModelKind.softmax_regression:
            return 'SoftmaxRegression'
        return f'Mlp1h-{self.hidden_dim}'


class LabeledBatch(NamedTuple):
    """A batch of feature vectors and their class labels."""

    features: np.ndarray
    labels: np.ndarray


def _layer_shapes(spec: ModelSpec) -> Tuple[Tuple[str, Tuple[int, ...]], ...]:
    if spec.kind is ModelKind.softmax_regression:
        return (
            ('W', (spec.input_dim, spec.num_classes)),
            ('b', (spec.num_classes,)),
        )
    return (
        ('W1', (spec.input_dim, spec.hidden_dim)),
        ('b1', (spec.hidden_dim,)),
        ('W2', (spec.hidden_dim, spec.num_classes)),
        ('b2', (spec.num_classes,)),
    )


def parameter_count(spec: ModelSpec) -> int:
    """Count the parameters of a model.

    >>> parameter_count(ModelSpec(ModelKind.softmax_regression, input_dim=4, num_classes=3))
    15
    >>> parameter_count(ModelSpec(ModelKind.mlp1h, input_dim=4, num_classes=3, hidden_dim=5))
    43
    """
    return sum(math.prod(shape) for _, shape in _layer_shapes(spec))


def frozen_count(spec: ModelSpec) -> int:
    """Count the leading coordinates that are frozen."""
    return int(math.floor(spec.frozen_fraction * parameter_count(spec)))


def _trainable_mask(spec: ModelSpec) -> np.ndarray:
    mask = np.ones(parameter_count(spec), dtype=bool)
    mask[:frozen_count(spec)] = False
    return mask


def _unpack(spec: ModelSpec, values: np.ndarray) -> Dict[str, np.ndarray]:
    if values.size != parameter_count(spec):
        raise DimensionError(f'{spec.label} expects {parameter_count(spec)} parameters, got {values.size}')
    rv = {}
    offset = 0
    for name, shape in _layer_shapes(spec):
        size = math.prod(shape)
        rv[name] = values[offset:offset + size].reshape(shape)
        offset += size
    return rv


def _pack(spec: ModelSpec, arrays: Dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([arrays[name].ravel() for name, _ in _layer_shapes(spec)])


def init_params(spec: ModelSpec, seed: int) -> ParamVector:
    """Initialize parameters with Glorot-uniform weights and zero biases.

    :param spec: The model architecture
    :param seed: The seed for :func:`numpy.random.default_rng`
    :returns: A parameter vector whose leading coordinates are frozen according to ``spec``
    """
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in _layer_shapes(spec):
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            fan_in, fan_out = shape
            s = math.sqrt(6.0 / (fan_in + fan_out))
            arrays[name] = rng.uniform(-s, s, size=shape)
    return ParamVector(values=_pack(spec, arrays), trainable_mask=_trainable_mask(spec))


def _check_features(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != spec.input_dim:
        raise DimensionError(f'{spec.label} expects {spec.input_dim} features, got shape {x.shape}')
    return x


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _logits(spec: ModelSpec, params: Dict[str, np.ndarray], x: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    if spec.kind is ModelKind.softmax_regression:
        return x @ params['W'] + params['b'], None
    hidden = np.tanh(x @ params['W1'] + params['b1'])
    return hidden @ params['W2'] + params['b2'], hidden


def forward(spec: ModelSpec, w: ParamVector, x: np.ndarray) -> np.ndarray:
    """Compute class probabilities for one feature vector or a matrix of them.

    :param spec: The model architecture
    :param w: The parameters
    :param x: A feature vector of length ``input_dim`` or a matrix with one row per sample
    :returns: Softmax probabilities with the same leading shape as ``x``
    :raises DimensionError: if the features or parameters do not match ``spec``
    """
    x = _check_features(spec, x)
    logits, _ = _logits(spec, _unpack(spec, w.values), x)
    return _softmax(logits)


def predict(spec: ModelSpec, w: ParamVector, x: np.ndarray) -> np.ndarray:
    """Predict class indices, breaking ties in favor of the lowest index."""
    # numpy's argmax returns the first maximal index
    return np.argmax(forward(spec, w, np.atleast_2d(x)), axis=1)


def loss_and_grad(
    spec: ModelSpec,
    w: ParamVector,
    batch: LabeledBatch,
    loss_cfg: FocalConfig,
) -> Tuple[float, ParamVector]:
    """Compute the mean focal loss of a batch and its gradient with respect to the parameters.

    :param spec: The model architecture
    :param w: The parameters
    :param batch: Any object with ``features`` (n x d) and ``labels`` (n) attributes
    :param loss_cfg: The focal loss configuration
    :returns: A pair of the mean loss and the gradient. Frozen coordinates of the gradient are zero.
    :raises ValueError: if the batch is empty or a label is out of range
    :raises DimensionError: if the features or parameters do not match ``spec``
    """
    x = np.atleast_2d(_check_features(spec, batch.features))
    y = np.asarray(batch.labels, dtype=np.int64).ravel()
    n = y.size
    if n == 0:
        raise ValueError('cannot compute the loss of an empty batch')
    if x.shape[0] != n:
        raise DimensionError(f'{x.shape[0]} feature rows but {n} labels')
    if y.min() < 0 or y.max() >= spec.num_classes:
        raise ValueError(f'labels must be in [0, {spec.num_classes}), got [{y.min()}, {y.max()}]')

    params = _unpack(spec, w.values)
    logits, hidden = _logits(spec, params, x)
    probs = _softmax(logits)
    rows = np.arange(n)
    alpha_t = loss_cfg.alpha_array(spec.num_classes)[y]
    losses, coefficients = focal_terms(probs[rows, y], alpha_t, loss_cfg.gamma)

    onehot = np.zeros_like(probs)
    onehot[rows, y] = 1.0
    d_logits = coefficients[:, None] * (onehot - probs) / n

    if spec.kind is ModelKind.softmax_regression:
        grads = {
            'W': x.T @ d_logits,
            'b': d_logits.sum(axis=0),
        }
    else:
        d_hidden = (d_logits @ params['W2'].T) * (1.0 - hidden ** 2)
        grads = {
            'W1': x.T @ d_hidden,
            'b1': d_hidden.sum(axis=0),
            'W2': hidden.T @ d_logits,
            'b2': d_logits.sum(axis=0),
        }
    gradient = np.where(w.trainable_mask, _pack(spec, grads), 0.0)
    return float(losses.mean()), w.with_values(gradient)
