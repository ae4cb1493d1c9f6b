# -*- coding: utf-8 -*-

"""Tests for running the training paradigms."""

import unittest
from dataclasses import replace
from unittest import mock

import numpy as np

from fedcyte.aggregation import AggregationStrategy, ClientUpdate, StrategyKind, aggregate
from fedcyte.data import HOLDOUT_CLASSES, generate_synthetic, get_builtin_profiles
from fedcyte.model import ModelKind, ModelSpec, init_params
from fedcyte.orchestrator import (
    DatasetSource, ExperimentConfig, Paradigm, fold_indices, prepare_client, round_trainer_config, run_centralized,
    run_experiment, run_federated, run_local,
)
from fedcyte.params import DimensionError
from fedcyte.trainer import TrainerConfig, local_train
from fedcyte.utils import derive_seed

DIMENSION = 8


class TestExperimentConfig(unittest.TestCase):
    """Tests for experiment configuration validation."""

    def setUp(self) -> None:
        """Set up the test case."""
        profiles = get_builtin_profiles(dimension=DIMENSION, fraction=0.1)
        datasets = generate_synthetic(profiles, d=DIMENSION, class_sep=4.0, seed=0)
        self.sources = tuple(DatasetSource(name=p.name, dataset=ds) for p, ds in zip(profiles, datasets))
        self.model = ModelSpec(ModelKind.softmax_regression, input_dim=DIMENSION, num_classes=11)

    def test_invalid(self):
        """Test that invalid experiments are rejected."""
        for kwargs in [
            {'rounds': 0},
            {'kfold': 1},
            {'clients': ()},
            {'clients': (self.sources[0], self.sources[0])},
            {'holdout': self.sources[0]},
            {'paradigm': 'swarm'},
            {'master_seed': -1},
            {'master_seed': 1.5},
            {'master_seed': '7'},
        ]:
            with self.subTest(**{key: str(value)[:20] for key, value in kwargs.items()}):
                with self.assertRaises(ValueError):
                    ExperimentConfig(**{'model': self.model, 'clients': self.sources[:2], **kwargs})

    def test_master_seed(self):
        """Test that integer-valued seeds of any integer type are stored as plain integers."""
        cfg = ExperimentConfig(model=self.model, clients=self.sources[:2], master_seed=np.int64(12))
        self.assertIs(int, type(cfg.master_seed))
        self.assertEqual(12, cfg.master_seed)

    def test_sources(self):
        """Test that a dataset source needs exactly one of a path and a dataset."""
        with self.assertRaises(ValueError):
            DatasetSource(name='empty')
        with self.assertRaises(ValueError):
            DatasetSource(name='both', path='x.csv', dataset=self.sources[0].dataset)
        with self.assertRaises(ValueError):
            DatasetSource(name='', path='x.csv')

    def test_epoch_budget(self):
        """Test that the default budget is five rounds of five epochs."""
        cfg = ExperimentConfig(model=self.model, clients=self.sources[:2])
        self.assertEqual(25, cfg.epoch_budget)

    def test_fedprox_trainer(self):
        """Test that FedProx hands its coefficient to the clients and other strategies do not."""
        fedprox = ExperimentConfig(
            model=self.model, clients=self.sources[:2], strategy=AggregationStrategy(kind='fedprox', fedprox_mu=0.5),
        )
        self.assertEqual(0.5, round_trainer_config(fedprox, 'client1', 1).prox_mu)
        fedavg = replace(fedprox, strategy=AggregationStrategy(kind='fedavg', fedprox_mu=0.5))
        self.assertEqual(0.0, round_trainer_config(fedavg, 'client1', 1).prox_mu)
        self.assertEqual(derive_seed(0, 'client1', 3), round_trainer_config(fedavg, 'client1', 3).seed)


class TestParadigms(unittest.TestCase):
    """Tests for the federated, local, and centralized paradigms on a small benchmark."""

    @classmethod
    def setUpClass(cls) -> None:
        """Generate the small benchmark once."""
        profiles = get_builtin_profiles(dimension=DIMENSION, fraction=0.1)
        datasets = generate_synthetic(profiles, d=DIMENSION, class_sep=4.0, seed=0)
        cls.client1, cls.client2, cls.holdout = (
            DatasetSource(name=p.name, dataset=ds) for p, ds in zip(profiles, datasets)
        )

    def _cfg(self, **kwargs) -> ExperimentConfig:
        defaults = dict(
            model=ModelSpec(ModelKind.softmax_regression, input_dim=DIMENSION, num_classes=11),
            clients=(self.client1, self.client2),
            holdout=self.holdout,
            trainer=TrainerConfig(local_epochs=1),
            rounds=2,
            master_seed=7,
        )
        defaults.update(kwargs)
        return ExperimentConfig(**defaults)

    def test_single_client_matches_local_train(self):
        """Test that one FedAvg round with one client is exactly that client's local training."""
        cfg = self._cfg(clients=(self.client1,), rounds=1)
        result = run_federated(cfg)
        client = prepare_client(cfg, self.client1)
        expected = local_train(
            cfg.model,
            init_params(cfg.model, derive_seed(cfg.master_seed, 'init')),
            client.splits.train,
            round_trainer_config(cfg, client.name, 1),
            client.focal,
            client_id=client.name,
        )
        self.assertTrue(expected.params.equals(result.final_params))

    def test_local_matches_single_client_federation(self):
        """Test that local training reproduces a single-client FedAvg federation round for round."""
        federated = run_federated(self._cfg(clients=(self.client2,), rounds=3))
        (local,) = run_local(self._cfg(clients=(self.client2,), rounds=3, paradigm=Paradigm.local))
        self.assertTrue(federated.final_params.equals(local.final_params))
        self.assertEqual(
            [record.to_dict() for record in federated.per_round],
            [record.to_dict() for record in local.per_round],
        )

    def test_zero_learning_rate(self):
        """Test that no strategy moves the global model when clients do not move."""
        for kind in StrategyKind:
            trainer = TrainerConfig(local_epochs=1, learning_rate=0.0)
            cfg = self._cfg(trainer=trainer, strategy=AggregationStrategy(kind))
            initial = init_params(cfg.model, derive_seed(cfg.master_seed, 'init'))
            with self.subTest(strategy=kind.value):
                result = run_federated(cfg)
                np.testing.assert_allclose(initial.values, result.final_params.values, rtol=1e-12, atol=1e-12)

    def test_federated_result(self):
        """Test the structure of a federated result."""
        cfg = self._cfg(strategy=AggregationStrategy(StrategyKind.fedmedian))
        result = run_federated(cfg)
        self.assertEqual('Federated (FedMedian)', result.label)
        self.assertEqual('FedMedian', result.strategy)
        self.assertEqual('SoftmaxRegression', result.model)
        self.assertEqual([1, 2], [record.round for record in result.per_round])
        for record in result.per_round:
            self.assertEqual({'client1', 'client2'}, set(record.validation_balanced_accuracy))
        self.assertEqual({'client1', 'client2'}, set(result.local_test))
        global_test_size = sum(prepare_client(cfg, source).splits.sizes()[3] for source in cfg.clients)
        self.assertEqual(global_test_size, result.combined_test.total)

    def test_holdout(self):
        """Test that the holdout institution is scored on its nine classes."""
        result = run_federated(self._cfg())
        supported = {
            name for name, support in zip(result.holdout_test.class_names, result.holdout_test.support) if support
        }
        self.assertEqual(set(HOLDOUT_CLASSES), supported)
        self.assertEqual(9, len(supported))
        self.assertEqual(len(self.holdout.dataset), result.holdout_test.total)
        self.assertIsNone(run_federated(self._cfg(holdout=None)).holdout_test)

    def test_only_updates_reach_the_server(self):
        """Test that aggregation only ever receives client updates."""
        with mock.patch('fedcyte.orchestrator.aggregate', wraps=aggregate) as spy:
            run_federated(self._cfg(rounds=3))
        self.assertEqual(3, spy.call_count)
        for call in spy.call_args_list:
            _, _, updates, _ = call.args
            self.assertEqual(['client1', 'client2'], [update.client_id for update in updates])
            for update in updates:
                self.assertIsInstance(update, ClientUpdate)

    def test_thread_count(self):
        """Test that running clients concurrently gives bitwise-identical results."""
        cfg = self._cfg(strategy=AggregationStrategy(StrategyKind.fedopt))
        with mock.patch('fedcyte.orchestrator.get_thread_count', return_value=1):
            sequential = run_federated(cfg)
        with mock.patch('fedcyte.orchestrator.get_thread_count', return_value=4):
            concurrent = run_federated(cfg)
        self.assertTrue(sequential.final_params.equals(concurrent.final_params))
        self.assertEqual(sequential.to_dict(), concurrent.to_dict())

    def test_deterministic(self):
        """Test that the master seed fixes the outcome."""
        first = run_local(self._cfg(paradigm=Paradigm.local))
        second = run_local(self._cfg(paradigm=Paradigm.local))
        self.assertEqual(['Local - client1', 'Local - client2'], [result.label for result in first])
        for a, b in zip(first, second):
            self.assertTrue(a.final_params.equals(b.final_params))
        other = run_local(self._cfg(paradigm=Paradigm.local, master_seed=8))
        self.assertFalse(first[0].final_params.equals(other[0].final_params))

    def test_centralized(self):
        """Test that centralized training reports the best of its fold models."""
        result = run_centralized(self._cfg(paradigm=Paradigm.centralized, kfold=3))
        self.assertEqual('Centralized (Combined)', result.label)
        self.assertEqual(3, len(result.fold_balanced_accuracy))
        self.assertEqual(int(np.argmax(result.fold_balanced_accuracy)), result.selected_fold)
        self.assertEqual((), result.per_round)
        self.assertIsNotNone(result.holdout_test)

    def test_wrong_paradigm(self):
        """Test that each runner checks the paradigm."""
        with self.assertRaises(ValueError):
            run_federated(self._cfg(paradigm=Paradigm.local))
        with self.assertRaises(ValueError):
            run_centralized(self._cfg())

    def test_dimension_mismatch(self):
        """Test that data that does not fit the model is rejected."""
        model = ModelSpec(ModelKind.softmax_regression, input_dim=DIMENSION + 1, num_classes=11)
        with self.assertRaises(DimensionError):
            run_federated(self._cfg(model=model))

    def test_run_experiment(self):
        """Test dispatching on the paradigm."""
        self.assertEqual(2, len(run_experiment(self._cfg(paradigm=Paradigm.local))))
        (result,) = run_experiment(self._cfg(paradigm=Paradigm.federated))
        self.assertEqual(Paradigm.federated, result.paradigm)


class TestFolds(unittest.TestCase):
    """Tests for k-fold index generation."""

    def test_partition(self):
        """Test that validation folds partition the samples."""
        folds = fold_indices(10, 2, seed=0)
        self.assertEqual(2, len(folds))
        for train, validation in folds:
            self.assertEqual(5, train.size)
            self.assertEqual(5, validation.size)
            self.assertEqual(set(range(10)), set(train.tolist()) | set(validation.tolist()))
        self.assertEqual(list(range(10)), sorted(np.concatenate([v for _, v in folds]).tolist()))

    def test_too_few(self):
        """Test that there must be at least as many samples as folds."""
        with self.assertRaises(ValueError):
            fold_indices(3, 4, seed=0)


class TestParadigmOrdering(unittest.TestCase):
    """Test the ordering of the paradigms on the scaled benchmark with default budgets."""

    def test_ordering(self):
        """Test that federation beats local training and stays close to centralized training."""
        profiles = get_builtin_profiles(dimension=32, fraction=0.1)
        client1, client2, holdout = (
            DatasetSource(name=p.name, dataset=ds)
            for p, ds in zip(profiles, generate_synthetic(profiles, d=32, class_sep=4.0, seed=0))
        )
        base = ExperimentConfig(
            model=ModelSpec(ModelKind.softmax_regression, input_dim=32, num_classes=11),
            clients=(client1, client2),
            holdout=holdout,
            strategy=AggregationStrategy(StrategyKind.fedmedian),
            master_seed=42,
        )
        federated = run_federated(base).combined_test.balanced_accuracy
        local = [result.combined_test.balanced_accuracy for result in run_local(replace(base, paradigm='local'))]
        centralized = run_centralized(replace(base, paradigm='centralized')).combined_test.balanced_accuracy
        self.assertGreaterEqual(federated, max(local) + 0.02)
        self.assertGreaterEqual(centralized, federated - 0.02)
