# -*- coding: utf-8 -*-

"""Utilities."""

import logging
import os
import tempfile
import zlib
from datetime import datetime
from typing import Union

import click
import numpy as np
import pystow

__all__ = [
    'secho',
    'derive_seed',
    'get_thread_count',
    'atomic_write_text',
]

logger = logging.getLogger(__name__)


def secho(s, fg='cyan', bold=True, **kwargs):
    """Wrap :func:`click.secho`."""
    click.echo(f'[{datetime.now().strftime("%H:%M:%S")}] ' + click.style(s, fg=fg, bold=bold, **kwargs))


def derive_seed(master_seed: int, *keys: Union[int, str]) -> int:
    """Derive a stable 32-bit seed from a master seed and a sequence of keys.

    String keys are hashed with CRC-32 of their UTF-8 bytes, so the result does not
    depend on Python's per-process hash randomization or on the order in which
    clients are scheduled.

    :param master_seed: The experiment-level seed
    :param keys: Any mix of integers (e.g., round index) and strings (e.g., client id)
    :returns: A seed suitable for :func:`numpy.random.default_rng`

    >>> derive_seed(42, 'client1', 1) == derive_seed(42, 'client1', 1)
    True
    >>> derive_seed(42, 'client1', 1) == derive_seed(42, 'client1', 2)
    False
    """
    entropy = [int(master_seed)]
    for key in keys:
        if isinstance(key, str):
            entropy.append(zlib.crc32(key.encode('utf-8')))
        else:
            entropy.append(int(key))
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def get_thread_count() -> int:
    """Get the worker cap from ``FEDCYTE_THREADS`` (or the ``fedcyte.ini`` config), defaulting to 1."""
    value = pystow.get_config('fedcyte', 'threads')
    if value is None:
        return 1
    try:
        threads = int(value)
    except ValueError:
        logger.warning('ignoring non-integer thread count: %s', value)
        return 1
    return max(1, threads)


def atomic_write_text(path: Union[str, os.PathLike], text: str) -> None:
    """Write text to a file by writing a temporary sibling then renaming it over the target."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as file:
            file.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
