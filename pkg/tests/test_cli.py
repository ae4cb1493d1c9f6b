# -*- coding: utf-8 -*-

"""Tests for the command line interface."""

import json
import os
import tempfile
import unittest

from click.testing import CliRunner

from fedcyte.cli import main
from fedcyte.constants import MANIFEST_NAME, REPORT_NAME, RESULTS_NAME


class TestCLI(unittest.TestCase):
    """Tests for the ``generate``, ``run``, and ``report`` commands."""

    def setUp(self) -> None:
        """Set up the test case."""
        self.runner = CliRunner()
        self.directory = tempfile.TemporaryDirectory()
        self.data = os.path.join(self.directory.name, 'data')

    def tearDown(self) -> None:
        """Tear down the test case."""
        self.directory.cleanup()

    def _invoke(self, *args, exit_code=0, **kwargs):
        result = self.runner.invoke(main, [str(arg) for arg in args], **kwargs)
        self.assertEqual(exit_code, result.exit_code, msg=result.output)
        return result

    def _read(self, *parts) -> str:
        with open(os.path.join(*parts), encoding='utf-8') as file:
            return file.read()

    def _generate(self, directory=None):
        self._invoke('generate', '--preset', 'wbc-x0.1', '--out', directory or self.data)

    def test_generate(self):
        """Test that generation writes three files and a manifest, identically on every run."""
        self._generate()
        self.assertEqual(
            ['client1.csv', 'client2.csv', 'client3-holdout.csv', MANIFEST_NAME],
            sorted(os.listdir(self.data)),
        )
        client2 = self._read(self.data, 'client2.csv').splitlines()
        self.assertTrue(client2[0].startswith('#classes:'))
        self.assertEqual(903, len(client2) - 2)
        manifest = json.loads(self._read(self.data, MANIFEST_NAME))
        self.assertEqual(0.1, manifest['settings']['fraction'])
        self.assertEqual(903, manifest['profiles'][1]['total'])

        again = os.path.join(self.directory.name, 'again')
        self._generate(again)
        for name in os.listdir(self.data):
            with self.subTest(name=name):
                self.assertEqual(self._read(self.data, name), self._read(again, name))

    def test_generate_seed(self):
        """Test that the seed option changes the data."""
        self._generate()
        other = os.path.join(self.directory.name, 'other')
        self._invoke('generate', '--preset', 'wbc-x0.1', '--seed', 1, '--out', other)
        self.assertNotEqual(self._read(self.data, 'client1.csv'), self._read(other, 'client1.csv'))

    def test_run_deterministic(self):
        """Test that repeated runs write byte-identical results, regardless of the thread count."""
        self._generate()
        outputs = []
        for i, threads in enumerate(['1', '1', '3']):
            out = os.path.join(self.directory.name, f'run{i}')
            self._invoke(
                'run', '--preset', 'smoke', '--data', self.data, '--seed', 42, '--out', out,
                env={'FEDCYTE_THREADS': threads},
            )
            outputs.append(out)
        reference = self._read(outputs[0], RESULTS_NAME)
        self.assertEqual(1, len(reference.splitlines()))
        self.assertEqual(42, json.loads(reference)['config']['master_seed'])
        for out in outputs[1:]:
            self.assertEqual(reference, self._read(out, RESULTS_NAME))
            self.assertEqual(self._read(outputs[0], REPORT_NAME), self._read(out, REPORT_NAME))

        printed = self._invoke('report', os.path.join(outputs[0], RESULTS_NAME)).output
        self.assertEqual(self._read(outputs[0], REPORT_NAME), printed)
        report_path = os.path.join(self.directory.name, 'report.md')
        self._invoke('report', os.path.join(outputs[0], RESULTS_NAME), '--out', report_path)
        self.assertEqual(printed, self._read(report_path))

    def test_run_config(self):
        """Test running a configuration file."""
        self._generate()
        config = os.path.join(self.data, 'local.yml')
        with open(config, 'w', encoding='utf-8') as file:
            file.write(
                'experiments:\n'
                '  - id: local\n'
                '    paradigm: local\n'
                '    rounds: 1\n'
                '    trainer: {local_epochs: 1}\n'
                '    clients:\n'
                '      - {name: client1, path: client1.csv}\n'
                '      - {name: client2, path: client2.csv}\n'
            )
        out = os.path.join(self.directory.name, 'out')
        self._invoke('run', '--config', config, '--out', out)
        (record,) = [json.loads(line) for line in self._read(out, RESULTS_NAME).splitlines()]
        self.assertEqual('local', record['id'])
        self.assertEqual(['Local - client1', 'Local - client2'], [run['label'] for run in record['runs']])

    def test_exit_codes(self):
        """Test that configuration errors exit with 2 and data errors with 3."""
        config = os.path.join(self.directory.name, 'bad.yml')
        with open(config, 'w', encoding='utf-8') as file:
            file.write('experiments:\n  - clients: [{name: a, path: a.csv}]\n    epochs: 3\n')
        self._invoke('run', '--config', config, exit_code=2)
        self._invoke('run', exit_code=2)

        with open(config, 'w', encoding='utf-8') as file:
            file.write('experiments:\n  - clients: [{name: a, path: missing.csv}]\n')
        self._invoke('run', '--config', config, '--out', self.directory.name, exit_code=3)

        with open(os.path.join(self.directory.name, 'a.csv'), 'w', encoding='utf-8') as file:
            file.write('#classes:x,y\nlabel,f1\nx,1\nz,2\n')
        with open(config, 'w', encoding='utf-8') as file:
            file.write('experiments:\n  - clients: [{name: a, path: a.csv}]\n')
        result = self._invoke('run', '--config', config, '--out', self.directory.name, exit_code=3)
        self.assertIn(':4:', result.output)

        results = os.path.join(self.directory.name, 'results.jsonl')
        with open(results, 'w', encoding='utf-8') as file:
            file.write('not json\n')
        self._invoke('report', results, exit_code=2)
        with open(results, 'w', encoding='utf-8') as file:
            file.write('{"id": "x", "runs": [{}]}\n')
        self._invoke('report', results, exit_code=2)

        with open(config, 'w', encoding='utf-8') as file:
            file.write('experiments:\n  - clients: [{name: a, path: a.csv}]\n    master_seed: abc\n')
        result = self._invoke('run', '--config', config, '--out', self.directory.name, exit_code=2)
        self.assertIn('master_seed', result.output)
