# -*- coding: utf-8 -*-

"""Constants shared across fedcyte."""

import os
import pathlib

import pystow

__all__ = [
    'HERE',
    'FEDCYTE_MODULE',
    'CLASS_NAMES',
    'DEFAULT_DIMENSION',
    'DEFAULT_CLASS_SEP',
    'RESULTS_NAME',
    'REPORT_NAME',
    'MANIFEST_NAME',
]

HERE = pathlib.Path(os.path.abspath(os.path.dirname(__file__)))

#: Default location for generated datasets and run outputs (respects ``PYSTOW_HOME``)
FEDCYTE_MODULE = pystow.module('fedcyte')

#: The eleven white blood cell types shared by the training institutions, in table order
CLASS_NAMES = (
    'Band neutrophils',
    'Basophil',
    'Eosinophils',
    'Lymphocyte',
    'Lymphocyte atypical',
    'Metamyelocyte',
    'Monocyte',
    'Myelocyte',
    'Promyelocyte',
    'Segmented neutrophils',
    'Smudged cells',
)

#: Feature dimension of the built-in synthetic benchmark
DEFAULT_DIMENSION = 32
#: Expected distance between class prototypes of the built-in synthetic benchmark
DEFAULT_CLASS_SEP = 4.0

RESULTS_NAME = 'results.jsonl'
REPORT_NAME = 'report.md'
MANIFEST_NAME = 'manifest.json'
