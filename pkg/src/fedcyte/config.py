# -*- coding: utf-8 -*-

"""Experiment configuration documents and presets.

A configuration document is YAML with a list of ``experiments`` and an optional
mapping of ``defaults`` that is merged under every experiment:

.. code-block:: yaml

    defaults:
      master_seed: 42
      model: {kind: softmax_regression, input_dim: 32, num_classes: 11}
      clients:
        - {name: client1, path: client1.csv}
        - {name: client2, path: client2.csv}
      holdout: {name: client3-holdout, path: client3-holdout.csv}
    experiments:
      - id: fedmedian
        strategy: {kind: fedmedian}
      - id: centralized
        paradigm: centralized

Unknown keys are rejected. Relative dataset paths are resolved against the
directory of the configuration file.
"""

import copy
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Type, TypeVar, Union

import yaml

from .aggregation import AggregationStrategy, FedMedianConfig, FedOptConfig, StrategyKind
from .constants import CLASS_NAMES, DEFAULT_CLASS_SEP, DEFAULT_DIMENSION
from .data import GENERATION_PRESETS
from .loss import FocalConfig
from .model import ModelKind, ModelSpec
from .orchestrator import DatasetSource, ExperimentConfig, Paradigm
from .trainer import TrainerConfig

__all__ = [
    'ConfigError',
    'GenerationSettings',
    'PRESETS',
    'load_config',
    'parse_config',
    'get_preset',
    'experiment_to_dict',
    'experiment_from_dict',
    'apply_seed',
    'get_generation_preset',
    'load_generation_config',
]

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]
X = TypeVar('X')

#: The names of the built-in experiment presets
PRESETS = ('smoke', 'strategy-sweep', 'paradigm-compare')

_EXPERIMENT_KEYS = {
    'id', 'paradigm', 'rounds', 'kfold', 'master_seed',
    'model', 'strategy', 'trainer', 'focal', 'clients', 'holdout',
}
_MODEL_KEYS = {f.name for f in fields(ModelSpec)}
_FEDOPT_KEYS = {f.name for f in fields(FedOptConfig)}
_FEDMEDIAN_KEYS = {f.name for f in fields(FedMedianConfig)}
_STRATEGY_KEYS = {'kind', 'fedopt', 'fedmedian', 'fedprox_mu'}
# the orchestrator derives trainer seeds and focal weights itself
_TRAINER_KEYS = {f.name for f in fields(TrainerConfig)} - {'seed'}
_FOCAL_KEYS = {'gamma', 'alpha_clip'}
_SOURCE_KEYS = {'name', 'path'}
_GENERATION_KEYS = {'profiles', 'fraction', 'dimension', 'class_sep', 'seed'}


class ConfigError(ValueError):
    """Raised when a configuration document is malformed."""


def _mapping(data: Any, path: str, allowed: Iterable[str]) -> Dict[str, Any]:
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f'{path}: expected a mapping, got {type(data).__name__}')
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f'{path}: unknown key(s) {", ".join(f"{path}.{key}" for key in unknown)}')
    return dict(data)


def _build(cls: Type[X], where: str, **kwargs: Any) -> X:
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f'{where}: {e}') from None


def _merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    rv = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(rv.get(key), Mapping):
            rv[key] = _merge(rv[key], value)
        else:
            rv[key] = copy.deepcopy(value)
    return rv


def _source(data: Any, path: str, base_directory: Optional[PathLike]) -> DatasetSource:
    data = _mapping(data, path, _SOURCE_KEYS)
    for key in ('name', 'path'):
        if not isinstance(data.get(key), str) or not data[key]:
            raise ConfigError(f'{path}.{key}: expected a non-empty string')
    location = data['path']
    if base_directory is not None and not os.path.isabs(location):
        location = os.path.join(base_directory, location)
    return _build(DatasetSource, path, name=data['name'], path=os.path.abspath(location))


def experiment_from_dict(
    data: Mapping[str, Any],
    base_directory: Optional[PathLike] = None,
    path: str = 'experiment',
) -> ExperimentConfig:
    """Build an experiment configuration from plain data.

    :param data: A mapping with the keys produced by :func:`experiment_to_dict`. Missing keys get defaults.
    :param base_directory: The directory relative dataset paths are resolved against
    :param path: The location of the data in its document, used in error messages
    :returns: An experiment configuration
    :raises ConfigError: on unknown keys, missing clients, or invalid values
    """
    data = _mapping(data, path, _EXPERIMENT_KEYS)

    model = _mapping(data.get('model'), f'{path}.model', _MODEL_KEYS)
    model.setdefault('kind', ModelKind.softmax_regression.value)
    model.setdefault('input_dim', DEFAULT_DIMENSION)
    model.setdefault('num_classes', len(CLASS_NAMES))
    model_spec = _build(ModelSpec, f'{path}.model', **model)

    strategy = _mapping(data.get('strategy'), f'{path}.strategy', _STRATEGY_KEYS)
    fedopt = _mapping(strategy.pop('fedopt', None), f'{path}.strategy.fedopt', _FEDOPT_KEYS)
    fedmedian = _mapping(strategy.pop('fedmedian', None), f'{path}.strategy.fedmedian', _FEDMEDIAN_KEYS)
    aggregation = _build(
        AggregationStrategy,
        f'{path}.strategy',
        fedopt=_build(FedOptConfig, f'{path}.strategy.fedopt', **fedopt),
        fedmedian=_build(FedMedianConfig, f'{path}.strategy.fedmedian', **fedmedian),
        **strategy,
    )

    trainer_data = _mapping(data.get('trainer'), f'{path}.trainer', _TRAINER_KEYS)
    trainer = _build(TrainerConfig, f'{path}.trainer', **trainer_data)
    focal = _mapping(data.get('focal'), f'{path}.focal', _FOCAL_KEYS)
    if 'alpha_clip' in focal:
        clip = focal['alpha_clip']
        if not isinstance(clip, Sequence) or isinstance(clip, str) or len(clip) != 2:
            raise ConfigError(f'{path}.focal.alpha_clip: expected a pair of numbers')
        focal['alpha_clip'] = tuple(clip)
    focal_cfg = _build(FocalConfig, f'{path}.focal', **focal)

    clients = data.get('clients')
    if not isinstance(clients, list) or not clients:
        raise ConfigError(f'{path}.clients: expected a non-empty list')
    sources = [
        _source(client, f'{path}.clients[{i}]', base_directory)
        for i, client in enumerate(clients)
    ]
    holdout = data.get('holdout')
    holdout_source = None if holdout is None else _source(holdout, f'{path}.holdout', base_directory)

    kwargs = {key: data[key] for key in ('id', 'paradigm', 'rounds', 'kfold', 'master_seed') if key in data}
    if 'id' in kwargs:
        kwargs['id'] = str(kwargs['id'])
    return _build(
        ExperimentConfig,
        path,
        model=model_spec,
        strategy=aggregation,
        trainer=trainer,
        focal=focal_cfg,
        clients=tuple(sources),
        holdout=holdout_source,
        **kwargs,
    )


def experiment_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Get the fully materialized configuration as JSON-compatible data.

    :param cfg: An experiment configuration whose datasets are files
    :returns: A mapping that :func:`experiment_from_dict` turns back into an equal configuration
    """
    trainer = asdict(cfg.trainer)
    del trainer['seed']
    return {
        'id': cfg.id,
        'paradigm': cfg.paradigm.value,
        'rounds': cfg.rounds,
        'kfold': cfg.kfold,
        'master_seed': cfg.master_seed,
        'model': {
            'kind': cfg.model.kind.value,
            'input_dim': cfg.model.input_dim,
            'num_classes': cfg.model.num_classes,
            'hidden_dim': cfg.model.hidden_dim,
            'frozen_fraction': cfg.model.frozen_fraction,
        },
        'strategy': {
            'kind': cfg.strategy.kind.value,
            'fedprox_mu': cfg.strategy.fedprox_mu,
            'fedopt': asdict(cfg.strategy.fedopt),
            'fedmedian': asdict(cfg.strategy.fedmedian),
        },
        'trainer': trainer,
        'focal': {
            'gamma': cfg.focal.gamma,
            'alpha_clip': list(cfg.focal.alpha_clip),
        },
        'clients': [{'name': source.name, 'path': source.path} for source in cfg.clients],
        'holdout': None if cfg.holdout is None else {'name': cfg.holdout.name, 'path': cfg.holdout.path},
    }


def parse_config(document: Mapping[str, Any], base_directory: Optional[PathLike] = None) -> List[ExperimentConfig]:
    """Build experiment configurations from a parsed configuration document.

    :param document: A mapping with ``experiments`` and optionally ``defaults``
    :param base_directory: The directory relative dataset paths are resolved against
    :returns: The experiments, in document order
    :raises ConfigError: if the document is malformed or experiment ids repeat
    """
    document = _mapping(document, 'config', {'experiments', 'defaults'})
    defaults = document.get('defaults') or {}
    if not isinstance(defaults, Mapping):
        raise ConfigError('config.defaults: expected a mapping')
    experiments = document.get('experiments')
    if not isinstance(experiments, list):
        raise ConfigError('config.experiments: expected a list')

    rv = []
    for i, experiment in enumerate(experiments):
        if not isinstance(experiment, Mapping):
            raise ConfigError(f'experiments[{i}]: expected a mapping')
        merged = _merge(defaults, experiment)
        merged.setdefault('id', f'experiment{i}')
        rv.append(experiment_from_dict(merged, base_directory, f'experiments[{i}]'))

    ids = [cfg.id for cfg in rv]
    duplicates = sorted({i for i in ids if ids.count(i) > 1})
    if duplicates:
        raise ConfigError(f'duplicate experiment ids: {", ".join(duplicates)}')
    return rv


def load_config(path: PathLike, data_directory: Optional[PathLike] = None) -> List[ExperimentConfig]:
    """Load experiment configurations from a YAML file.

    :param path: The configuration file
    :param data_directory: Resolve relative dataset paths against this directory
        instead of the configuration file's directory
    :returns: The experiments, in document order
    :raises ConfigError: if the file is not valid YAML or the document is malformed
    """
    with open(path, encoding='utf-8') as file:
        try:
            document = yaml.safe_load(file)
        except yaml.YAMLError as e:
            raise ConfigError(f'{path}: invalid YAML: {e}') from None
    if data_directory is None:
        data_directory = os.path.dirname(os.path.abspath(path))
    return parse_config(document, data_directory)


#: The datasets written by ``fedcyte generate``, relative to its output directory
_BUILTIN_SOURCES = {
    'clients': [
        {'name': 'client1', 'path': 'client1.csv'},
        {'name': 'client2', 'path': 'client2.csv'},
    ],
    'holdout': {'name': 'client3-holdout', 'path': 'client3-holdout.csv'},
}


def get_preset(name: str, data_directory: PathLike) -> List[ExperimentConfig]:
    """Get a built-in experiment preset.

    - ``smoke``: one short federated FedAvg run
    - ``strategy-sweep``: the four aggregation strategies with both reference models
    - ``paradigm-compare``: local, federated (FedMedian), and centralized training of softmax regression

    :param name: The preset name
    :param data_directory: A directory with ``client1.csv``, ``client2.csv``, and
        ``client3-holdout.csv``, as written by ``fedcyte generate``
    :returns: The experiments of the preset
    :raises ConfigError: if the preset does not exist
    """
    defaults = _BUILTIN_SOURCES
    if name == 'smoke':
        experiments = [{
            'id': 'smoke',
            'rounds': 1,
            'trainer': {'local_epochs': 1},
            'strategy': {'kind': StrategyKind.fedavg.value},
        }]
    elif name == 'strategy-sweep':
        experiments = [
            {
                'id': f'{strategy.value}-{kind.value}',
                'model': {'kind': kind.value},
                'strategy': {'kind': strategy.value},
            }
            for kind in ModelKind
            for strategy in StrategyKind
        ]
    elif name == 'paradigm-compare':
        experiments = [
            {'id': 'local', 'paradigm': Paradigm.local.value},
            {'id': 'federated-fedmedian', 'strategy': {'kind': StrategyKind.fedmedian.value}},
            {'id': 'centralized', 'paradigm': Paradigm.centralized.value},
        ]
    else:
        raise ConfigError(f'unknown preset {name}. Use one of: {", ".join(PRESETS)}')
    return parse_config({'defaults': defaults, 'experiments': experiments}, data_directory)


def apply_seed(cfgs: Iterable[ExperimentConfig], seed: Optional[int]) -> List[ExperimentConfig]:
    """Override the master seed of every experiment, unless the seed is None."""
    if seed is None:
        return list(cfgs)
    return [replace(cfg, master_seed=seed) for cfg in cfgs]


@dataclass(frozen=True)
class GenerationSettings:
    """Settings for writing the built-in synthetic institutions to disk."""

    #: Multiplier on the published per-class counts
    fraction: float = 1.0
    dimension: int = DEFAULT_DIMENSION
    class_sep: float = DEFAULT_CLASS_SEP
    seed: int = 0
    #: The name of the generation preset the settings started from
    profiles: str = 'wbc'

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError(f'fraction must be in (0, 1]: {self.fraction}')
        if int(self.dimension) != self.dimension or self.dimension < 2:
            raise ValueError(f'dimension must be an integer of at least 2: {self.dimension}')
        if not self.class_sep > 0:
            raise ValueError(f'class_sep must be positive: {self.class_sep}')

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to JSON-compatible data."""
        return asdict(self)


def get_generation_preset(name: str) -> GenerationSettings:
    """Get the generation settings of a named preset.

    :raises ConfigError: if the preset does not exist
    """
    if name not in GENERATION_PRESETS:
        raise ConfigError(f'unknown generation preset {name}. Use one of: {", ".join(GENERATION_PRESETS)}')
    fraction, dimension, class_sep, seed = GENERATION_PRESETS[name]
    return GenerationSettings(fraction=fraction, dimension=dimension, class_sep=class_sep, seed=seed, profiles=name)


def load_generation_config(path: PathLike) -> GenerationSettings:
    """Load generation settings from a YAML file.

    The ``profiles`` key names a generation preset (default ``wbc``) whose
    values are overridden by the other keys.
    """
    with open(path, encoding='utf-8') as file:
        try:
            document = yaml.safe_load(file)
        except yaml.YAMLError as e:
            raise ConfigError(f'{path}: invalid YAML: {e}') from None
    document = _mapping(document, 'generate', _GENERATION_KEYS)
    settings = get_generation_preset(str(document.pop('profiles', 'wbc')))
    return _build(GenerationSettings, 'generate', **{**asdict(settings), **document})
