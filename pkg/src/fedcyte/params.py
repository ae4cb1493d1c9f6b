# -*- coding: utf-8 -*-

"""Flat parameter vectors exchanged between models, clients, and the server.

A :class:`ParamVector` is an immutable value: a float64 array of parameters plus a
boolean mask that marks which coordinates are trainable. Frozen coordinates travel
with the vector so that aggregation stays index-aligned across clients, but no
optimizer or aggregator ever changes them.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    'DimensionError',
    'ParamVector',
    'axpy',
    'l2_norm',
]

ArrayLike = Union[Sequence[float], np.ndarray]


class DimensionError(ValueError):
    """Raised when vectors, masks, or feature matrices have incompatible shapes."""


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Model parameters with a per-coordinate trainable mask."""

    #: The parameter values as a 1D float64 array
    values: np.ndarray
    #: True where the coordinate is trainable
    trainable_mask: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        mask = np.array(self.trainable_mask, dtype=bool).ravel()
        if values.size < 1:
            raise DimensionError('parameter vector must have at least one coordinate')
        if values.shape != mask.shape:
            raise DimensionError(f'values have length {values.size} but mask has length {mask.size}')
        if not np.all(np.isfinite(values)):
            raise ValueError('parameter vector contains non-finite values')
        object.__setattr__(self, 'values', _readonly(values))
        object.__setattr__(self, 'trainable_mask', _readonly(mask))

    @classmethod
    def from_values(cls, values: ArrayLike, trainable_mask: Optional[ArrayLike] = None) -> 'ParamVector':
        """Build a vector, treating every coordinate as trainable unless a mask is given."""
        values = np.asarray(values, dtype=np.float64)
        if trainable_mask is None:
            trainable_mask = np.ones(values.size, dtype=bool)
        return cls(values=values, trainable_mask=trainable_mask)

    def __len__(self) -> int:  # noqa:D105
        return int(self.values.size)

    @property
    def frozen_count(self) -> int:
        """Count the frozen coordinates."""
        return int(np.count_nonzero(~self.trainable_mask))

    def with_values(self, values: ArrayLike) -> 'ParamVector':
        """Return a new vector with the same mask and the given values."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise DimensionError(f'expected {self.values.size} values, got {values.size}')
        return ParamVector(values=values, trainable_mask=self.trainable_mask)

    def zeros_like(self) -> 'ParamVector':
        """Return a zero vector with the same mask."""
        return self.with_values(np.zeros_like(self.values))

    def scale(self, a: float) -> 'ParamVector':
        """Multiply every coordinate by ``a``."""
        return self.with_values(a * self.values)

    def masked(self) -> 'ParamVector':
        """Return a copy with every frozen coordinate set to zero."""
        return self.with_values(np.where(self.trainable_mask, self.values, 0.0))

    def check_compatible(self, other: 'ParamVector') -> None:
        """Raise a :class:`DimensionError` unless the other vector has the same length and mask."""
        if self.values.shape != other.values.shape:
            raise DimensionError(f'length mismatch: {self.values.size} != {other.values.size}')
        if not np.array_equal(self.trainable_mask, other.trainable_mask):
            raise DimensionError('trainable masks differ')

    def equals(self, other: 'ParamVector') -> bool:
        """Check bitwise equality of values and masks."""
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.trainable_mask, other.trainable_mask)
        )


def axpy(a: float, x: ParamVector, y: ParamVector) -> ParamVector:
    """Compute ``a * x + y`` coordinate-wise.

    :param a: The scalar multiplier
    :param x: The vector to scale
    :param y: The vector to add
    :returns: A new vector carrying the (shared) mask of the inputs
    :raises DimensionError: if the vectors differ in length or mask

    >>> axpy(2.0, ParamVector.from_values([1, 2]), ParamVector.from_values([3, 4])).values.tolist()
    [5.0, 8.0]
    """
    x.check_compatible(y)
    return y.with_values(a * x.values + y.values)


def l2_norm(x: ParamVector) -> float:
    """Compute the Euclidean norm of the values.

    >>> l2_norm(ParamVector.from_values([3, 4]))
    5.0
    """
    return float(np.linalg.norm(x.values))
