# -*- coding: utf-8 -*-

"""Command line interface for fedcyte.

Exit codes: 0 on success, 2 for configuration errors, 3 for data or runtime errors.
"""

import json
import logging
import os
import pathlib
from functools import wraps
from typing import Optional

import click
from more_click import verbose_option

from .config import (
    ConfigError, GenerationSettings, PRESETS, apply_seed, get_generation_preset, get_preset, load_config,
    load_generation_config,
)
from .constants import FEDCYTE_MODULE, MANIFEST_NAME, REPORT_NAME, RESULTS_NAME
from .data import GENERATION_PRESETS, generate_synthetic, get_builtin_profiles, write_csv
from .orchestrator import run_experiment
from .report import make_record, read_results, render_report, write_results
from .utils import atomic_write_text, get_thread_count, secho

__all__ = [
    'main',
]

logger = logging.getLogger(__name__)

#: The generation preset that the experiment presets read from by default
DEFAULT_DATA_PRESET = 'wbc-x0.1'

seed_option = click.option(
    '--seed', type=click.IntRange(min=0),
    help='Override the master seed of every experiment (or the generation seed)',
)


def _exit_codes(f):
    """Map configuration errors to exit code 2 and other value or I/O errors to exit code 3."""
    @wraps(f)
    def _wrapped(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ConfigError as e:
            click.secho(f'configuration error: {e}', fg='red', err=True)
            raise click.exceptions.Exit(2)
        except (ValueError, OSError) as e:
            click.secho(f'error: {e}', fg='red', err=True)
            raise click.exceptions.Exit(3)

    return _wrapped


@click.group()
@click.version_option()
def main():
    """Run the fedcyte CLI."""


@main.command()
@click.option('--preset', type=click.Choice(sorted(GENERATION_PRESETS)), help='A built-in generation preset')
@click.option('--config', type=click.Path(exists=True, dir_okay=False), help='A YAML file of generation settings')
@click.option('--out', type=click.Path(file_okay=False), help='Output directory. Defaults to the data directory.')
@seed_option
@verbose_option
@_exit_codes
def generate(preset: Optional[str], config: Optional[str], out: Optional[str], seed: Optional[int]):
    """Write the synthetic institutions as CSV files with a manifest."""
    if preset and config:
        raise ConfigError('use either --preset or --config, not both')
    if config:
        settings = load_generation_config(config)
    else:
        settings = get_generation_preset(preset or 'wbc')
    if seed is not None:
        settings = GenerationSettings(**{**settings.to_dict(), 'seed': seed})
    directory = pathlib.Path(out) if out else FEDCYTE_MODULE.join(settings.profiles)

    profiles = get_builtin_profiles(settings.dimension, settings.fraction)
    datasets = generate_synthetic(profiles, settings.dimension, settings.class_sep, settings.seed)
    manifest = {
        'settings': settings.to_dict(),
        'class_names': list(datasets[0].class_names),
        'profiles': [],
    }
    for profile, ds in zip(profiles, datasets):
        file_name = f'{profile.name}.csv'
        write_csv(ds, directory / file_name)
        manifest['profiles'].append({
            'name': profile.name,
            'file': file_name,
            'total': profile.total,
            'class_counts': list(profile.class_counts),
            'shift': {
                'scale': list(profile.shift.scale),
                'offset': list(profile.shift.offset),
                'rotation_seed': profile.shift.rotation_seed,
            },
        })
        secho(f'wrote {len(ds):,} samples to {directory / file_name}')
    atomic_write_text(directory / MANIFEST_NAME, json.dumps(manifest, indent=2, sort_keys=True) + '\n')


@main.command()
@click.option('--config', type=click.Path(exists=True, dir_okay=False), help='A YAML experiment configuration')
@click.option('--preset', type=click.Choice(PRESETS), help='A built-in experiment preset')
@click.option(
    '--data', type=click.Path(file_okay=False),
    help=f'Directory with the datasets. Defaults to the {DEFAULT_DATA_PRESET} generation output for presets.',
)
@click.option('--out', type=click.Path(file_okay=False), help='Output directory for results and report')
@seed_option
@verbose_option
@_exit_codes
def run(config: Optional[str], preset: Optional[str], data: Optional[str], out: Optional[str], seed: Optional[int]):
    """Run experiments and write the results and report."""
    if bool(config) == bool(preset):
        raise ConfigError('use exactly one of --config or --preset')
    if config:
        cfgs = load_config(config, data_directory=data)
        name = os.path.splitext(os.path.basename(config))[0]
    else:
        cfgs = get_preset(preset, data or FEDCYTE_MODULE.join(DEFAULT_DATA_PRESET))
        name = preset
    cfgs = apply_seed(cfgs, seed)
    directory = pathlib.Path(out) if out else FEDCYTE_MODULE.join('runs', name)

    secho(f'running {len(cfgs)} experiment(s) with up to {get_thread_count()} thread(s)')
    records = []
    for cfg in cfgs:
        results = run_experiment(cfg, use_tqdm=True)
        for result in results:
            secho(f'[{cfg.id}] {result.label}: balanced accuracy {result.combined_test.balanced_accuracy:.4f}')
        records.append(make_record(cfg, results))

    write_results(directory / RESULTS_NAME, records)
    atomic_write_text(directory / REPORT_NAME, render_report(records))
    secho(f'wrote results and report to {directory}')


@main.command()
@click.argument('results', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', type=click.Path(dir_okay=False), help='Write the report here instead of printing it')
@verbose_option
@_exit_codes
def report(results: str, out: Optional[str]):
    """Render the tables of a results document."""
    try:
        records = read_results(results)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    text = render_report(records)
    if out:
        atomic_write_text(out, text)
    else:
        click.echo(text, nl=False)


if __name__ == '__main__':
    main()
