# -*- coding: utf-8 -*-

"""Focal loss with frequency-derived, clipped per-class weights."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

__all__ = [
    'DEFAULT_GAMMA',
    'DEFAULT_ALPHA_CLIP',
    'P_FLOOR',
    'FocalConfig',
    'alpha_weights',
    'focal_loss',
    'focal_terms',
]

logger = logging.getLogger(__name__)

#: Exponent of the modulating factor
DEFAULT_GAMMA = 2.5
#: Bounds applied to the per-class alpha weights
DEFAULT_ALPHA_CLIP = (0.1, 4.0)
#: Floor on the true-class probability before taking its log
P_FLOOR = 1e-12


@dataclass(frozen=True)
class FocalConfig:
    """Configuration for the focal loss."""

    #: Exponent of the modulating factor (1 - p_t)^gamma
    gamma: float = DEFAULT_GAMMA
    #: Per-class weights. If None, every class gets weight 1.0
    alpha: Optional[Tuple[float, ...]] = None
    #: Lower and upper bound for alpha
    alpha_clip: Tuple[float, float] = field(default=DEFAULT_ALPHA_CLIP)

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f'gamma must be finite and non-negative: {self.gamma}')
        lo, hi = self.alpha_clip
        if not 0 < lo <= hi:
            raise ValueError(f'invalid alpha clip range: {self.alpha_clip}')
        object.__setattr__(self, 'alpha_clip', (float(lo), float(hi)))
        if self.alpha is not None:
            alpha = tuple(float(a) for a in self.alpha)
            if any(not lo <= a <= hi for a in alpha):
                raise ValueError(f'alpha weights outside clip range {self.alpha_clip}: {alpha}')
            object.__setattr__(self, 'alpha', alpha)

    def with_alpha(self, alpha: Sequence[float]) -> 'FocalConfig':
        """Return a copy of the config with the given per-class weights."""
        return FocalConfig(gamma=self.gamma, alpha=tuple(alpha), alpha_clip=self.alpha_clip)

    def alpha_array(self, num_classes: int) -> np.ndarray:
        """Get the per-class weights as an array of the given length."""
        if self.alpha is None:
            return np.ones(num_classes, dtype=np.float64)
        if len(self.alpha) != num_classes:
            raise ValueError(f'alpha has {len(self.alpha)} entries but there are {num_classes} classes')
        return np.asarray(self.alpha, dtype=np.float64)


def alpha_weights(class_counts: Sequence[int], clip: Tuple[float, float] = DEFAULT_ALPHA_CLIP) -> Tuple[float, ...]:
    """Compute per-class focal weights as ``clip(sqrt(1 / f_c), lo, hi)``.

    :param class_counts: The number of samples per class
    :param clip: The lower and upper bound
    :returns: One weight per class. Classes with no samples get the upper bound.
    :raises ValueError: if all counts are zero

    >>> alpha_weights([10])
    (1.0,)
    >>> [round(a, 4) for a in alpha_weights([1, 3, 0])]
    [2.0, 1.1547, 4.0]
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError(f'class counts must be non-negative: {list(class_counts)}')
    total = counts.sum()
    if total <= 0:
        raise ValueError('cannot derive alpha weights from all-zero class counts')
    lo, hi = clip
    rv = np.full(counts.shape, float(hi))
    present = counts > 0
    rv[present] = np.clip(np.sqrt(total / counts[present]), lo, hi)
    return tuple(float(a) for a in rv)


def focal_loss(p: Sequence[float], label: int, cfg: FocalConfig) -> float:
    """Compute ``-(1 - p_t)^gamma * alpha_label * ln(p_t)`` for a single prediction.

    :param p: A probability vector
    :param label: The index of the true class
    :param cfg: The focal loss configuration
    :returns: The (non-negative) loss
    :raises ValueError: if the label is out of range
    """
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= label < p.size:
        raise ValueError(f'label {label} out of range for {p.size} classes')
    alpha = cfg.alpha_array(p.size)[label]
    losses, _ = focal_terms(p[label:label + 1], np.array([alpha]), cfg.gamma)
    return float(losses[0])


def focal_terms(p_t: np.ndarray, alpha_t: np.ndarray, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    """Compute per-sample focal losses and their derivative coefficients.

    For softmax outputs ``p`` and logits ``z``, the derivative of the focal loss of a
    sample with respect to its logits is ``coefficient * (onehot - p)``.

    :param p_t: The probability assigned to the true class, per sample
    :param alpha_t: The alpha weight of the true class, per sample
    :param gamma: The focal exponent
    :returns: A pair of arrays (losses, coefficients)
    """
    p_t = np.asarray(p_t, dtype=np.float64)
    p_safe = np.maximum(p_t, P_FLOOR)
    log_p = np.log(p_safe)
    one_minus = np.clip(1.0 - p_t, 0.0, 1.0)
    modulation = one_minus ** gamma
    losses = -alpha_t * modulation * log_p
    if gamma == 0:
        slope = np.zeros_like(p_t)
    else:
        # (1 - p)^(gamma - 1) * p * log(p) tends to 0 as p -> 1
        positive = one_minus > 0
        slope = np.zeros_like(p_t)
        slope[positive] = gamma * one_minus[positive] ** (gamma - 1.0) * p_t[positive] * log_p[positive]
    # the log is flat below the floor, so only the modulation factor varies there
    unfloored = (p_t >= P_FLOOR).astype(np.float64)
    coefficients = alpha_t * (slope - modulation * unfloored)
    return losses, coefficients
