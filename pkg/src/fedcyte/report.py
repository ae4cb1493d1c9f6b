# -*- coding: utf-8 -*-

"""Read and write the results document and render it as Markdown tables.

The results document is JSON Lines with one record per experiment::

    {"config": {...}, "id": "fedmedian", "runs": [{...}, ...]}

where ``config`` is the fully materialized experiment configuration and each run
is the output of :meth:`fedcyte.orchestrator.RunResult.to_dict`.
"""

import json
import logging
import os
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

from tabulate import tabulate

from .config import experiment_to_dict
from .orchestrator import ExperimentConfig, RunResult
from .utils import atomic_write_text

__all__ = [
    'make_record',
    'dumps_results',
    'write_results',
    'read_results',
    'render_report',
]

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]
Record = Mapping[str, Any]


def make_record(cfg: ExperimentConfig, results: Sequence[RunResult]) -> Dict[str, Any]:
    """Bundle an experiment's configuration and results into a results-document record."""
    return {
        'id': cfg.id,
        'config': experiment_to_dict(cfg),
        'runs': [result.to_dict() for result in results],
    }


def dumps_results(records: Iterable[Record]) -> str:
    """Serialize records as JSON Lines with sorted keys."""
    return ''.join(json.dumps(record, sort_keys=True) + '\n' for record in records)


def write_results(path: PathLike, records: Iterable[Record]) -> None:
    """Atomically write records to a JSON Lines file."""
    atomic_write_text(path, dumps_results(records))


_PARADIGMS = {'federated', 'local', 'centralized'}
_SCORES = ('accuracy', 'balanced_accuracy', 'macro_f1')


def _metrics_problem(metrics: Any, key: str) -> Optional[str]:
    if not isinstance(metrics, dict):
        return f'{key} must be a mapping'
    class_names = metrics.get('class_names')
    if not isinstance(class_names, list):
        return f'{key}.class_names must be a list'
    for name in ('support', 'per_class_f1'):
        if not isinstance(metrics.get(name), list) or len(metrics[name]) != len(class_names):
            return f'{key}.{name} must be a list with one entry per class'
    for name in _SCORES:
        if isinstance(metrics.get(name), bool) or not isinstance(metrics.get(name), (int, float)):
            return f'{key}.{name} must be a number'
    return None


def _run_problem(run: Any) -> Optional[str]:
    if not isinstance(run, dict):
        return 'run must be a mapping'
    for key in ('label', 'model'):
        if not isinstance(run.get(key), str):
            return f'run needs a string {key}'
    if run.get('paradigm') not in _PARADIGMS:
        return f'unknown paradigm {run.get("paradigm")!r}'
    if run.get('strategy') is not None and not isinstance(run['strategy'], str):
        return 'strategy must be a string'
    problem = _metrics_problem(run.get('combined_test'), 'combined_test')
    if problem is None and run.get('holdout_test') is not None:
        problem = _metrics_problem(run['holdout_test'], 'holdout_test')
    return problem


def read_results(path: PathLike) -> List[Dict[str, Any]]:
    """Read a results document.

    :param path: A JSON Lines file written by :func:`write_results`
    :returns: The records in file order
    :raises ValueError: if a line is not a valid record
    """
    rv = []
    with open(path, encoding='utf-8') as file:
        for line_number, line in enumerate(file, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f'{path}:{line_number}: malformed record: {e}') from None
            if not isinstance(record, dict) or 'id' not in record or not isinstance(record.get('runs'), list):
                raise ValueError(f'{path}:{line_number}: record needs an id and a list of runs')
            for i, run in enumerate(record['runs']):
                problem = _run_problem(run)
                if problem is not None:
                    raise ValueError(f'{path}:{line_number}: runs[{i}]: {problem}')
            rv.append(record)
    return rv


def _fmt(value: Optional[float]) -> str:
    return '' if value is None else f'{value:.4f}'


def _runs(records: Iterable[Record]) -> List[Record]:
    return [run for record in records for run in record['runs']]


def _table(rows: Sequence[Sequence[str]], headers: Sequence[str]) -> str:
    return tabulate(rows, headers=headers, tablefmt='github', disable_numparse=True)


def _column(run: Record) -> str:
    return f'{run["model"]}: {run["label"]}'


def _strategy_table(runs: Sequence[Record]) -> str:
    rows = [
        (
            run['strategy'],
            run['model'],
            _fmt(run['combined_test']['balanced_accuracy']),
            _fmt(run['combined_test']['macro_f1']),
        )
        for run in runs
        if run['paradigm'] == 'federated'
    ]
    return _table(rows, headers=['Method', 'Model', 'Balanced Accuracy', 'Macro F1'])


def _paradigm_table(runs: Sequence[Record]) -> str:
    centralized: Dict[str, float] = {}
    for run in runs:
        if run['paradigm'] == 'centralized':
            centralized.setdefault(run['model'], run['combined_test']['balanced_accuracy'])
    rows = []
    for run in runs:
        retention = ''
        reference = centralized.get(run['model'])
        if run['paradigm'] == 'federated' and reference:
            retention = f'{100 * run["combined_test"]["balanced_accuracy"] / reference:.2f}%'
        rows.append((
            run['model'],
            run['label'],
            _fmt(run['combined_test']['accuracy']),
            _fmt(run['combined_test']['balanced_accuracy']),
            retention,
        ))
    return _table(rows, headers=['Model', 'Configuration', 'Accuracy', 'Balanced Accuracy', 'Retention'])


def _per_class_table(runs: Sequence[Record], key: str, only_supported: bool) -> str:
    runs = [run for run in runs if run.get(key)]
    if not runs:
        return _table([], headers=['Class', 'Images'])
    reference = runs[0][key]
    support = dict(zip(reference['class_names'], reference['support']))
    class_names = [name for name in reference['class_names'] if not only_supported or support[name] > 0]
    f1s = [dict(zip(run[key]['class_names'], run[key]['per_class_f1'])) for run in runs]
    rows = [
        [name, *(_fmt(f1.get(name)) for f1 in f1s), str(support[name])]
        for name in class_names
    ]
    if only_supported:
        rows.append(['Accuracy', *(_fmt(run[key]['accuracy']) for run in runs), ''])
        rows.append(['Bal. Accuracy', *(_fmt(run[key]['balanced_accuracy']) for run in runs), ''])
    return _table(rows, headers=['Class', *(_column(run) for run in runs), 'Images'])


def render_report(records: Iterable[Record]) -> str:
    """Render the results document as Markdown.

    :param records: Results-document records, as from :func:`read_results`
    :returns: A document with four tables: aggregation strategies, training paradigms,
        per-class F1 on the combined global test set, and per-class F1 on the holdout institution
    """
    runs = _runs(records)
    sections = [
        ('Aggregation strategies', 'Federated runs on the combined global test set.', _strategy_table(runs)),
        (
            'Training paradigms',
            'Retention is the federated balanced accuracy relative to the centralized run of the same model.',
            _paradigm_table(runs),
        ),
        (
            'Per-class F1 on the global test set',
            'Images counts the global test samples of each class.',
            _per_class_table(runs, 'combined_test', False),
        ),
        (
            'Per-class F1 on the holdout institution',
            'Only classes present at the holdout institution are listed.',
            _per_class_table(runs, 'holdout_test', True),
        ),
    ]
    parts = ['# fedcyte report\n']
    for title, caption, table in sections:
        parts.append(f'## {title}\n\n{caption}\n\n{table}\n')
    return '\n'.join(parts)
