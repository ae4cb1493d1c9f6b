# -*- coding: utf-8 -*-

"""Version information for fedcyte."""

__all__ = [
    'VERSION',
]

VERSION = '0.1.0-dev'
