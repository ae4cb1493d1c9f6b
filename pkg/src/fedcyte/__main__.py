# -*- coding: utf-8 -*-

"""Command line interface for fedcyte."""

from .cli import main

if __name__ == '__main__':
    main()
