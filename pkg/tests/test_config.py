# -*- coding: utf-8 -*-

"""Tests for configuration documents and presets."""

import os
import tempfile
import unittest

from fedcyte.aggregation import StrategyKind
from fedcyte.config import (
    PRESETS, ConfigError, GenerationSettings, apply_seed, experiment_from_dict, experiment_to_dict,
    get_generation_preset, get_preset, load_config, load_generation_config, parse_config,
)
from fedcyte.model import ModelKind
from fedcyte.orchestrator import Paradigm

CLIENTS = [{'name': 'client1', 'path': 'client1.csv'}, {'name': 'client2', 'path': 'client2.csv'}]


class TestExperimentDocuments(unittest.TestCase):
    """Tests for building experiments from plain data."""

    def test_defaults(self):
        """Test that a minimal experiment gets the default budgets and model."""
        cfg = experiment_from_dict({'clients': CLIENTS}, base_directory='/data')
        self.assertEqual(Paradigm.federated, cfg.paradigm)
        self.assertEqual(5, cfg.rounds)
        self.assertEqual(4, cfg.kfold)
        self.assertEqual(5, cfg.trainer.local_epochs)
        self.assertEqual(ModelKind.softmax_regression, cfg.model.kind)
        self.assertEqual(32, cfg.model.input_dim)
        self.assertEqual(11, cfg.model.num_classes)
        self.assertEqual(StrategyKind.fedavg, cfg.strategy.kind)
        self.assertEqual(2.5, cfg.focal.gamma)
        self.assertEqual(os.path.abspath('/data/client1.csv'), cfg.clients[0].path)
        self.assertIsNone(cfg.holdout)

    def test_round_trip(self):
        """Test that the materialized form builds an equal configuration."""
        cfg = experiment_from_dict({
            'id': 'sweep',
            'paradigm': 'centralized',
            'rounds': 3,
            'kfold': 2,
            'master_seed': 9,
            'model': {'kind': 'mlp1h', 'hidden_dim': 16},
            'strategy': {'kind': 'fedopt', 'fedopt': {'server_lr': 0.1}, 'fedmedian': {'iqr_k': 3.0}},
            'trainer': {'local_epochs': 2, 'learning_rate': 0.05},
            'focal': {'gamma': 1.0, 'alpha_clip': [0.5, 2.0]},
            'clients': CLIENTS,
            'holdout': {'name': 'holdout', 'path': '/elsewhere/holdout.csv'},
        }, base_directory='/data')
        data = experiment_to_dict(cfg)
        self.assertEqual(0.1, data['strategy']['fedopt']['server_lr'])
        self.assertEqual([0.5, 2.0], data['focal']['alpha_clip'])
        self.assertNotIn('seed', data['trainer'])
        self.assertEqual(cfg, experiment_from_dict(data))
        self.assertEqual(data, experiment_to_dict(experiment_from_dict(data)))

    def test_errors(self):
        """Test that errors name the offending location."""
        for data, needle in [
            ({'clients': CLIENTS, 'epochs': 5}, 'experiment.epochs'),
            ({'clients': CLIENTS, 'trainer': {'seed': 1}}, 'experiment.trainer.seed'),
            ({'clients': CLIENTS, 'strategy': {'fedopt': {'lr': 1}}}, 'experiment.strategy.fedopt.lr'),
            ({'clients': CLIENTS, 'strategy': {'kind': 'krum'}}, 'experiment.strategy'),
            ({'clients': CLIENTS, 'rounds': 0}, 'experiment'),
            ({'clients': CLIENTS, 'master_seed': 'abc'}, 'master_seed'),
            ({'clients': CLIENTS, 'master_seed': -1}, 'master_seed'),
            ({'clients': CLIENTS, 'master_seed': 1.5}, 'master_seed'),
            ({'clients': CLIENTS, 'master_seed': True}, 'master_seed'),
            ({'clients': CLIENTS, 'focal': {'alpha_clip': 2}}, 'experiment.focal.alpha_clip'),
            ({'clients': CLIENTS, 'model': 'mlp1h'}, 'experiment.model'),
            ({'clients': []}, 'experiment.clients'),
            ({'clients': [{'name': 'client1'}]}, 'experiment.clients[0].path'),
        ]:
            with self.subTest(needle=needle):
                with self.assertRaises(ConfigError) as context:
                    experiment_from_dict(data)
                self.assertIn(needle, str(context.exception))


class TestConfigDocuments(unittest.TestCase):
    """Tests for whole configuration documents."""

    def test_merge_defaults(self):
        """Test that defaults merge under each experiment, with nested mappings merged key by key."""
        cfgs = parse_config({
            'defaults': {'clients': CLIENTS, 'trainer': {'local_epochs': 2, 'momentum': 0.5}, 'master_seed': 3},
            'experiments': [
                {'trainer': {'local_epochs': 7}},
                {'id': 'second', 'master_seed': 4},
            ],
        }, base_directory='/data')
        self.assertEqual(['experiment0', 'second'], [cfg.id for cfg in cfgs])
        self.assertEqual(7, cfgs[0].trainer.local_epochs)
        self.assertEqual(0.5, cfgs[0].trainer.momentum)
        self.assertEqual(3, cfgs[0].master_seed)
        self.assertEqual(2, cfgs[1].trainer.local_epochs)
        self.assertEqual(4, cfgs[1].master_seed)

    def test_document_errors(self):
        """Test malformed documents."""
        for document in [
            {'experiments': [{'id': 'a', 'clients': CLIENTS}, {'id': 'a', 'clients': CLIENTS}]},
            {'experiments': {'id': 'a'}},
            {'experiments': ['a']},
            {'experiments': [], 'extra': 1},
            ['not', 'a', 'mapping'],
        ]:
            with self.subTest(document=str(document)[:40]), self.assertRaises(ConfigError):
                parse_config(document)

    def test_load(self):
        """Test loading a file, resolving paths against its directory unless told otherwise."""
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'experiments.yml')
            with open(path, 'w', encoding='utf-8') as file:
                file.write(
                    'defaults:\n'
                    '  clients:\n'
                    '    - {name: client1, path: client1.csv}\n'
                    'experiments:\n'
                    '  - id: fedopt\n'
                    '    strategy: {kind: fedopt, fedopt: {tau: 1.0e-3}}\n'
                )
            (cfg,) = load_config(path)
            self.assertEqual(os.path.join(os.path.abspath(directory), 'client1.csv'), cfg.clients[0].path)
            self.assertEqual(1e-3, cfg.strategy.fedopt.tau)
            (cfg,) = load_config(path, data_directory='/data')
            self.assertEqual(os.path.abspath('/data/client1.csv'), cfg.clients[0].path)

            with open(path, 'w', encoding='utf-8') as file:
                file.write('experiments: [\n')
            with self.assertRaises(ConfigError):
                load_config(path)

    def test_apply_seed(self):
        """Test overriding master seeds."""
        cfgs = parse_config({'experiments': [{'clients': CLIENTS}, {'clients': CLIENTS}]}, '/data')
        self.assertEqual([0, 0], [cfg.master_seed for cfg in apply_seed(cfgs, None)])
        self.assertEqual([11, 11], [cfg.master_seed for cfg in apply_seed(cfgs, 11)])


class TestPresets(unittest.TestCase):
    """Tests for the built-in presets."""

    def test_presets(self):
        """Test that every preset builds and reads the generated datasets."""
        for name in PRESETS:
            with self.subTest(name=name):
                cfgs = get_preset(name, '/data')
                self.assertLessEqual(1, len(cfgs))
                for cfg in cfgs:
                    self.assertEqual(
                        [os.path.abspath('/data/client1.csv'), os.path.abspath('/data/client2.csv')],
                        [source.path for source in cfg.clients],
                    )
                    self.assertEqual('client3-holdout', cfg.holdout.name)

    def test_contents(self):
        """Test the experiments each preset contains."""
        (smoke,) = get_preset('smoke', '/data')
        self.assertEqual((1, 1), (smoke.rounds, smoke.trainer.local_epochs))
        sweep = get_preset('strategy-sweep', '/data')
        self.assertEqual(8, len(sweep))
        self.assertIn('fedmedian-mlp1h', [cfg.id for cfg in sweep])
        compare = get_preset('paradigm-compare', '/data')
        self.assertEqual(
            [Paradigm.local, Paradigm.federated, Paradigm.centralized],
            [cfg.paradigm for cfg in compare],
        )
        self.assertEqual(StrategyKind.fedmedian, compare[1].strategy.kind)
        with self.assertRaises(ConfigError):
            get_preset('nope', '/data')


class TestGenerationSettings(unittest.TestCase):
    """Tests for synthetic data generation settings."""

    def test_presets(self):
        """Test the named generation presets."""
        self.assertEqual(1.0, get_generation_preset('wbc').fraction)
        scaled = get_generation_preset('wbc-x0.1')
        self.assertEqual(0.1, scaled.fraction)
        self.assertEqual('wbc-x0.1', scaled.profiles)
        with self.assertRaises(ConfigError):
            get_generation_preset('nope')
        with self.assertRaises(ValueError):
            GenerationSettings(fraction=1.5)

    def test_load(self):
        """Test loading settings that override a preset."""
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'generate.yml')
            with open(path, 'w', encoding='utf-8') as file:
                file.write('profiles: wbc-x0.1\ndimension: 8\n')
            settings = load_generation_config(path)
            self.assertEqual((0.1, 8, 'wbc-x0.1'), (settings.fraction, settings.dimension, settings.profiles))
            with open(path, 'w', encoding='utf-8') as file:
                file.write('dims: 8\n')
            with self.assertRaises(ConfigError):
                load_generation_config(path)
