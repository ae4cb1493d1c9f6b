# -*- coding: utf-8 -*-

"""Run the three training paradigms end to end.

- **Federated**: each round, every client trains from the broadcast global model on
  its own training split and returns a :class:`fedcyte.aggregation.ClientUpdate`.
  The server aggregates the updates with the configured strategy.
- **Local**: each client trains its own model for the same epoch budget.
- **Centralized**: the training and validation splits of all clients are pooled and
  ``kfold`` models are trained with k-fold cross-validation. The fold model with the
  best validation balanced accuracy is reported.

All models are evaluated on the concatenated global-test buckets of the clients and,
when configured, on the holdout institution's data.

Every random draw is seeded with :func:`fedcyte.utils.derive_seed` from the master
seed and stable keys (client name, round index), so running the clients of a round
concurrently gives the same results as running them one after another.
"""

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from numbers import Integral
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import KFold
from tqdm.auto import tqdm

from .aggregation import AggregationStrategy, ClientUpdate, StrategyKind, aggregate
from .data import LabeledDataset, SplitSet, concatenate, load_csv, split
from .loss import FocalConfig, alpha_weights
from .metrics import MetricsReport, evaluate
from .model import ModelSpec, init_params
from .params import DimensionError, ParamVector
from .trainer import TrainerConfig, local_train
from .utils import derive_seed, get_thread_count

__all__ = [
    'Paradigm',
    'DatasetSource',
    'ExperimentConfig',
    'RoundRecord',
    'RunResult',
    'PreparedClient',
    'prepare_client',
    'round_trainer_config',
    'fold_indices',
    'run_federated',
    'run_local',
    'run_centralized',
    'run_experiment',
]

logger = logging.getLogger(__name__)


class Paradigm(str, enum.Enum):
    """The training paradigms."""

    federated = 'federated'
    local = 'local'
    centralized = 'centralized'


@dataclass(frozen=True)
class DatasetSource:
    """A named dataset, either a CSV file or an in-memory dataset."""

    name: str
    path: Optional[str] = None
    dataset: Optional[LabeledDataset] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.name:
            raise ValueError('dataset source needs a name')
        if (self.path is None) == (self.dataset is None):
            raise ValueError(f'[{self.name}] dataset source needs exactly one of a path or a dataset')

    def load(self) -> LabeledDataset:
        """Get the dataset, reading the CSV file if necessary."""
        if self.dataset is not None:
            return self.dataset
        logger.debug('[%s] loading %s', self.name, self.path)
        return load_csv(self.path)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment."""

    model: ModelSpec
    clients: Tuple[DatasetSource, ...]
    id: str = 'experiment'
    paradigm: Paradigm = Paradigm.federated
    strategy: AggregationStrategy = field(default_factory=AggregationStrategy)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    focal: FocalConfig = field(default_factory=FocalConfig)
    rounds: int = 5
    #: Number of folds for the centralized paradigm
    kfold: int = 4
    holdout: Optional[DatasetSource] = None
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'paradigm', Paradigm(self.paradigm))
        object.__setattr__(self, 'clients', tuple(self.clients))
        if int(self.rounds) != self.rounds or self.rounds < 1:
            raise ValueError(f'rounds must be a positive integer: {self.rounds}')
        if int(self.kfold) != self.kfold or self.kfold < 2:
            raise ValueError(f'kfold must be an integer of at least 2: {self.kfold}')
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, Integral) or self.master_seed < 0:
            raise ValueError(f'master_seed must be a non-negative integer: {self.master_seed!r}')
        object.__setattr__(self, 'master_seed', int(self.master_seed))
        if not self.clients:
            raise ValueError(f'[{self.id}] needs at least one client')
        names = [client.name for client in self.clients]
        if len(set(names)) != len(names):
            raise ValueError(f'[{self.id}] duplicate client names: {names}')
        if self.holdout is not None and self.holdout.name in names:
            raise ValueError(f'[{self.id}] holdout {self.holdout.name} is also a training client')

    @property
    def epoch_budget(self) -> int:
        """Get the total number of epochs each paradigm trains for."""
        return self.rounds * self.trainer.local_epochs


@dataclass(frozen=True)
class RoundRecord:
    """Evaluation of the global model after one round (or one client model after one chunk of epochs)."""

    round: int
    #: Validation balanced accuracy keyed by client name
    validation_balanced_accuracy: Mapping[str, float]
    global_test_balanced_accuracy: float
    global_test_macro_f1: float

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to JSON-compatible data."""
        return {
            'round': self.round,
            'validation_balanced_accuracy': dict(self.validation_balanced_accuracy),
            'global_test_balanced_accuracy': self.global_test_balanced_accuracy,
            'global_test_macro_f1': self.global_test_macro_f1,
        }


@dataclass(frozen=True, eq=False)
class RunResult:
    """The outcome of training one reported model."""

    #: The row label in reports, e.g., ``Federated (FedMedian)``
    label: str
    paradigm: Paradigm
    #: The model label, e.g., ``SoftmaxRegression``
    model: str
    final_params: ParamVector
    combined_test: MetricsReport
    holdout_test: Optional[MetricsReport] = None
    per_round: Tuple[RoundRecord, ...] = ()
    #: Metrics on each client's local-test split, keyed by client name
    local_test: Mapping[str, MetricsReport] = field(default_factory=dict)
    #: The aggregation strategy label, for federated runs
    strategy: Optional[str] = None
    #: The client a local run belongs to
    client: Optional[str] = None
    fold_balanced_accuracy: Tuple[float, ...] = ()
    selected_fold: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        """Serialize everything but the parameters to JSON-compatible data."""
        return {
            'label': self.label,
            'paradigm': self.paradigm.value,
            'model': self.model,
            'strategy': self.strategy,
            'client': self.client,
            'combined_test': self.combined_test.to_dict(),
            'holdout_test': None if self.holdout_test is None else self.holdout_test.to_dict(),
            'local_test': {name: report.to_dict() for name, report in self.local_test.items()},
            'per_round': [record.to_dict() for record in self.per_round],
            'fold_balanced_accuracy': list(self.fold_balanced_accuracy),
            'selected_fold': self.selected_fold,
        }


@dataclass(frozen=True)
class PreparedClient:
    """A client's data split into buckets, with its focal weights derived from the training split."""

    name: str
    splits: SplitSet
    focal: FocalConfig


@dataclass(frozen=True)
class _Evaluation:
    global_test: LabeledDataset
    holdout: Optional[LabeledDataset]


def _check_dataset(cfg: ExperimentConfig, name: str, ds: LabeledDataset) -> None:
    if ds.dimension != cfg.model.input_dim:
        raise DimensionError(f'[{name}] has {ds.dimension} features but the model expects {cfg.model.input_dim}')
    if ds.num_classes != cfg.model.num_classes:
        raise DimensionError(f'[{name}] has {ds.num_classes} classes but the model expects {cfg.model.num_classes}')


def prepare_client(cfg: ExperimentConfig, source: DatasetSource) -> PreparedClient:
    """Load, validate, and split a client's data, then derive its focal weights.

    :param cfg: The experiment configuration
    :param source: One of the experiment's clients
    :returns: The prepared client
    :raises DimensionError: if the data does not match the model
    """
    ds = source.load()
    _check_dataset(cfg, source.name, ds)
    splits = split(ds, derive_seed(cfg.master_seed, source.name, 'split'))
    alpha = alpha_weights(splits.train.class_counts(), cfg.focal.alpha_clip)
    logger.debug('[%s] split sizes %s', source.name, splits.sizes())
    return PreparedClient(name=source.name, splits=splits, focal=cfg.focal.with_alpha(alpha))


def _prepare(cfg: ExperimentConfig) -> Tuple[List[PreparedClient], _Evaluation]:
    clients = [prepare_client(cfg, source) for source in cfg.clients]
    class_names = clients[0].splits.train.class_names
    for client in clients[1:]:
        if client.splits.train.class_names != class_names:
            raise ValueError(f'[{client.name}] class names differ from [{clients[0].name}]')
    holdout = None
    if cfg.holdout is not None:
        holdout = cfg.holdout.load()
        _check_dataset(cfg, cfg.holdout.name, holdout)
        if holdout.class_names != class_names:
            raise ValueError(f'[{cfg.holdout.name}] class names differ from the training clients')
    global_test = concatenate(client.splits.global_test for client in clients)
    return clients, _Evaluation(global_test=global_test, holdout=holdout)


def round_trainer_config(cfg: ExperimentConfig, client_id: str, round_index: int) -> TrainerConfig:
    """Get the trainer configuration a client uses in a given (1-based) round.

    The seed depends only on the master seed, the client, and the round. Under
    FedProx, the strategy's proximal coefficient is handed to the client.
    """
    prox_mu = cfg.strategy.fedprox_mu if cfg.strategy.kind is StrategyKind.fedprox else cfg.trainer.prox_mu
    return replace(cfg.trainer, seed=derive_seed(cfg.master_seed, client_id, round_index), prox_mu=prox_mu)


def _initial_params(cfg: ExperimentConfig) -> ParamVector:
    return init_params(cfg.model, derive_seed(cfg.master_seed, 'init'))


def _train_clients(
    cfg: ExperimentConfig,
    clients: Sequence[PreparedClient],
    w: ParamVector,
    round_index: int,
) -> List[ClientUpdate]:
    def _train(client: PreparedClient) -> ClientUpdate:
        return local_train(
            cfg.model,
            w,
            client.splits.train,
            round_trainer_config(cfg, client.name, round_index),
            client.focal,
            client_id=client.name,
        )

    workers = min(get_thread_count(), len(clients))
    if workers <= 1:
        return [_train(client) for client in clients]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        # map keeps the results in client order regardless of completion order
        return list(executor.map(_train, clients))


def _round_record(
    cfg: ExperimentConfig,
    w: ParamVector,
    round_index: int,
    clients: Sequence[PreparedClient],
    evaluation: _Evaluation,
) -> RoundRecord:
    global_test = evaluate(cfg.model, w, evaluation.global_test)
    return RoundRecord(
        round=round_index,
        validation_balanced_accuracy={
            client.name: evaluate(cfg.model, w, client.splits.validation).balanced_accuracy
            for client in clients
        },
        global_test_balanced_accuracy=global_test.balanced_accuracy,
        global_test_macro_f1=global_test.macro_f1,
    )


def _final_metrics(
    cfg: ExperimentConfig,
    w: ParamVector,
    clients: Sequence[PreparedClient],
    evaluation: _Evaluation,
) -> Dict[str, Any]:
    return dict(
        final_params=w,
        combined_test=evaluate(cfg.model, w, evaluation.global_test),
        holdout_test=None if evaluation.holdout is None else evaluate(cfg.model, w, evaluation.holdout),
        local_test={client.name: evaluate(cfg.model, w, client.splits.local_test) for client in clients},
    )


def _require(cfg: ExperimentConfig, paradigm: Paradigm) -> None:
    if cfg.paradigm is not paradigm:
        raise ValueError(f'[{cfg.id}] expected the {paradigm.value} paradigm, got {cfg.paradigm.value}')


def run_federated(cfg: ExperimentConfig, *, use_tqdm: bool = False) -> RunResult:
    """Train a global model with synchronous federated rounds.

    :param cfg: A federated experiment configuration
    :param use_tqdm: Show a progress bar over rounds
    :returns: The final global model's results, with one record per round
    :raises DimensionError: if client data or updates do not match the model
    """
    _require(cfg, Paradigm.federated)
    clients, evaluation = _prepare(cfg)
    w = _initial_params(cfg)
    state = None
    records = []
    label = f'Federated ({cfg.strategy.label})'
    rounds = tqdm(range(1, cfg.rounds + 1), desc=f'[{cfg.id}] {label}', unit='round', disable=not use_tqdm, leave=False)
    for round_index in rounds:
        updates = _train_clients(cfg, clients, w, round_index)
        w, state = aggregate(cfg.strategy, w, updates, state)
        record = _round_record(cfg, w, round_index, clients, evaluation)
        logger.info(
            '[%s] round %d/%d global test balanced accuracy %.4f',
            cfg.id, round_index, cfg.rounds, record.global_test_balanced_accuracy,
        )
        records.append(record)

    return RunResult(
        label=label,
        paradigm=Paradigm.federated,
        model=cfg.model.label,
        strategy=cfg.strategy.label,
        per_round=tuple(records),
        **_final_metrics(cfg, w, clients, evaluation),
    )


def run_local(cfg: ExperimentConfig, *, use_tqdm: bool = False) -> List[RunResult]:
    """Train one model per client on that client's data alone.

    Training runs in ``rounds`` chunks of ``local_epochs`` epochs that are seeded
    exactly like the federated rounds, so a single-client federation with FedAvg
    reproduces the local model bit for bit.

    :param cfg: A local experiment configuration
    :param use_tqdm: Show a progress bar over clients
    :returns: One result per client, in configuration order
    """
    _require(cfg, Paradigm.local)
    clients, evaluation = _prepare(cfg)
    rv = []
    for client in tqdm(clients, desc=f'[{cfg.id}] Local', unit='client', disable=not use_tqdm, leave=False):
        w = _initial_params(cfg)
        records = []
        for round_index in range(1, cfg.rounds + 1):
            w = local_train(
                cfg.model,
                w,
                client.splits.train,
                round_trainer_config(cfg, client.name, round_index),
                client.focal,
                client_id=client.name,
            ).params
            records.append(_round_record(cfg, w, round_index, [client], evaluation))
        result = RunResult(
            label=f'Local - {client.name}',
            paradigm=Paradigm.local,
            model=cfg.model.label,
            client=client.name,
            per_round=tuple(records),
            **_final_metrics(cfg, w, clients, evaluation),
        )
        logger.info(
            '[%s] %s global test balanced accuracy %.4f', cfg.id, result.label, result.combined_test.balanced_accuracy,
        )
        rv.append(result)
    return rv


def fold_indices(n: int, k: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Get shuffled k-fold (train, validation) index pairs.

    :param n: The number of samples
    :param k: The number of folds
    :param seed: The shuffling seed
    :returns: ``k`` pairs whose validation parts partition ``range(n)``
    :raises ValueError: if there are fewer samples than folds
    """
    if n < k:
        raise ValueError(f'cannot make {k} folds from {n} samples')
    kfold = KFold(n_splits=k, shuffle=True, random_state=seed)
    return list(kfold.split(np.arange(n)))


def run_centralized(cfg: ExperimentConfig, *, use_tqdm: bool = False) -> RunResult:
    """Train on the pooled training and validation data of all clients with k-fold cross-validation.

    Each fold model trains for ``rounds * local_epochs`` epochs with focal weights
    derived from its own training folds.

    :param cfg: A centralized experiment configuration
    :param use_tqdm: Show a progress bar over folds
    :returns: The results of the fold model with the highest validation balanced accuracy
    :raises ValueError: if the pooled data has fewer samples than folds
    """
    _require(cfg, Paradigm.centralized)
    clients, evaluation = _prepare(cfg)
    pooled = concatenate(
        ds
        for client in clients
        for ds in (client.splits.train, client.splits.validation)
    )
    folds = fold_indices(len(pooled), cfg.kfold, derive_seed(cfg.master_seed, 'kfold'))
    init = _initial_params(cfg)
    models, scores = [], []
    for fold, (train_indices, validation_indices) in enumerate(
        tqdm(folds, desc=f'[{cfg.id}] Centralized', unit='fold', disable=not use_tqdm, leave=False),
    ):
        train = pooled.subset(train_indices)
        focal = cfg.focal.with_alpha(alpha_weights(train.class_counts(), cfg.focal.alpha_clip))
        trainer_cfg = replace(cfg.trainer, seed=derive_seed(cfg.master_seed, 'centralized', fold))
        update = local_train(
            cfg.model, init, train, trainer_cfg, focal, client_id=f'fold{fold}', epochs=cfg.epoch_budget,
        )
        w = update.params
        score = evaluate(cfg.model, w, pooled.subset(validation_indices)).balanced_accuracy
        logger.info('[%s] fold %d/%d validation balanced accuracy %.4f', cfg.id, fold + 1, cfg.kfold, score)
        models.append(w)
        scores.append(score)

    # ties go to the lowest fold index
    selected = int(np.argmax(scores))
    return RunResult(
        label='Centralized (Combined)',
        paradigm=Paradigm.centralized,
        model=cfg.model.label,
        fold_balanced_accuracy=tuple(scores),
        selected_fold=selected,
        **_final_metrics(cfg, models[selected], clients, evaluation),
    )


def run_experiment(cfg: ExperimentConfig, *, use_tqdm: bool = False) -> List[RunResult]:
    """Run an experiment in its configured paradigm.

    :param cfg: The experiment configuration
    :param use_tqdm: Show progress bars
    :returns: A list of results (one per client for the local paradigm, otherwise one)
    """
    logger.info('[%s] running %s with %s', cfg.id, cfg.paradigm.value, cfg.model.label)
    if cfg.paradigm is Paradigm.local:
        return run_local(cfg, use_tqdm=use_tqdm)
    if cfg.paradigm is Paradigm.centralized:
        return [run_centralized(cfg, use_tqdm=use_tqdm)]
    return [run_federated(cfg, use_tqdm=use_tqdm)]
