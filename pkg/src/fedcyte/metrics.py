# -*- coding: utf-8 -*-

"""Confusion-matrix-based evaluation.

Balanced accuracy and macro F1 are averaged over the classes that actually occur
in the evaluated data. A holdout institution that never saw a class does not drag
those scores down with an undefined recall.
"""

import logging
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from .data import LabeledDataset
from .model import ModelSpec, predict
from .params import ParamVector

__all__ = [
    'MetricsReport',
    'metrics_from_predictions',
    'metrics_from_confusion',
    'evaluate',
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """Evaluation results for one model on one dataset."""

    class_names: Tuple[str, ...]
    #: Rows are true classes, columns are predicted classes
    confusion: np.ndarray
    accuracy: float
    balanced_accuracy: float
    macro_f1: float
    per_class_f1: Tuple[float, ...]
    per_class_precision: Tuple[float, ...]
    per_class_recall: Tuple[float, ...]
    support: Tuple[int, ...]

    @property
    def total(self) -> int:
        """Count the evaluated samples."""
        return int(self.confusion.sum())

    def f1_by_class(self) -> Mapping[str, float]:
        """Get the per-class F1 scores keyed by class name."""
        return dict(zip(self.class_names, self.per_class_f1))

    def to_dict(self) -> Mapping[str, Any]:
        """Serialize to JSON-compatible data."""
        return {
            'class_names': list(self.class_names),
            'confusion': self.confusion.tolist(),
            'accuracy': self.accuracy,
            'balanced_accuracy': self.balanced_accuracy,
            'macro_f1': self.macro_f1,
            'per_class_f1': list(self.per_class_f1),
            'per_class_precision': list(self.per_class_precision),
            'per_class_recall': list(self.per_class_recall),
            'support': list(self.support),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'MetricsReport':
        """Rebuild a report from :meth:`to_dict` output by recomputing from the confusion matrix."""
        return metrics_from_confusion(data['confusion'], data['class_names'])


def metrics_from_predictions(
    y_true: Sequence[int],
    y_pred: Sequence[int],
    class_names: Sequence[str],
) -> MetricsReport:
    """Compute metrics from true and predicted class indices.

    :param y_true: The true labels
    :param y_pred: The predicted labels
    :param class_names: The names of all classes, which fixes the size of the confusion matrix
    :returns: A metrics report
    :raises ValueError: if there are no samples or the label arrays differ in length
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise ValueError('cannot evaluate an empty dataset')
    if y_true.shape != y_pred.shape:
        raise ValueError(f'{y_true.size} labels but {y_pred.size} predictions')
    labels = list(range(len(class_names)))
    confusion = confusion_matrix(y_true, y_pred, labels=labels)
    precision, recall, f1, support = precision_recall_fscore_support(
        y_true, y_pred, labels=labels, average=None, zero_division=0,
    )
    present = support > 0
    confusion.setflags(write=False)
    return MetricsReport(
        class_names=tuple(class_names),
        confusion=confusion,
        accuracy=float(np.trace(confusion) / confusion.sum()),
        balanced_accuracy=float(recall[present].mean()),
        macro_f1=float(f1[present].mean()),
        per_class_f1=tuple(float(v) for v in f1),
        per_class_precision=tuple(float(v) for v in precision),
        per_class_recall=tuple(float(v) for v in recall),
        support=tuple(int(v) for v in support),
    )


def metrics_from_confusion(
    confusion: Sequence[Sequence[int]],
    class_names: Optional[Sequence[str]] = None,
) -> MetricsReport:
    """Compute metrics from a confusion matrix.

    >>> report = metrics_from_confusion([[9, 1], [4, 6]])
    >>> report.balanced_accuracy
    0.75
    >>> round(report.per_class_f1[0], 4)
    0.7826
    """
    confusion = np.asarray(confusion, dtype=np.int64)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise ValueError(f'confusion matrix must be square, got shape {confusion.shape}')
    if np.any(confusion < 0):
        raise ValueError('confusion matrix entries must be non-negative')
    if class_names is None:
        class_names = [str(i) for i in range(confusion.shape[0])]
    elif len(class_names) != confusion.shape[0]:
        raise ValueError(f'{len(class_names)} class names for a {confusion.shape[0]}-class confusion matrix')
    true_labels, predicted_labels = np.nonzero(confusion)
    counts = confusion[true_labels, predicted_labels]
    return metrics_from_predictions(
        np.repeat(true_labels, counts),
        np.repeat(predicted_labels, counts),
        class_names,
    )


def evaluate(spec: ModelSpec, w: ParamVector, ds: LabeledDataset) -> MetricsReport:
    """Evaluate a model on a dataset by argmax prediction.

    :param spec: The model architecture
    :param w: The parameters
    :param ds: A non-empty dataset
    :returns: A metrics report over the dataset's classes
    :raises ValueError: if the dataset is empty
    """
    if len(ds) == 0:
        raise ValueError('cannot evaluate an empty dataset')
    return metrics_from_predictions(ds.labels, predict(spec, w, ds.features), ds.class_names)
