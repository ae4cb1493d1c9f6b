# -*- coding: utf-8 -*-

"""Deterministic simulation of federated training across institutions with non-IID data."""

from .aggregation import (  # noqa
    AggregationStrategy, ClientUpdate, FedMedianConfig, FedOptConfig, ServerOptState, StrategyKind, aggregate, fedavg,
    fedmedian, fedopt_step, fedprox_aggregate,
)
from .config import (  # noqa
    ConfigError, apply_seed, experiment_from_dict, experiment_to_dict, get_preset, load_config,
)
from .data import (  # noqa
    DatasetFormatError, LabeledDataset, SplitSet, concatenate, generate_synthetic, get_builtin_profiles, load_csv,
    split, weighted_sampler, write_csv,
)
from .loss import FocalConfig, alpha_weights, focal_loss  # noqa
from .metrics import MetricsReport, evaluate, metrics_from_predictions  # noqa
from .model import LabeledBatch, ModelKind, ModelSpec, forward, init_params, loss_and_grad, predict  # noqa
from .orchestrator import (  # noqa
    DatasetSource, ExperimentConfig, Paradigm, RunResult, run_centralized, run_experiment, run_federated, run_local,
)
from .params import DimensionError, ParamVector, axpy, l2_norm  # noqa
from .report import read_results, render_report, write_results  # noqa
from .trainer import TrainerConfig, clip_gradient, local_train  # noqa
from .utils import derive_seed  # noqa
