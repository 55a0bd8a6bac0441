import os
from pathlib import Path

import numpy as np
import pytest

from torus_nf.config import APPNAME, OUT_ENV, ConfigParser
from torus_nf.initial_data import random_small
from torus_nf.spectral import get_lattice


@pytest.fixture()
def test_data_dir():
    """  Directory containing test data. """
    yield Path(__file__).parent / "test_data"


@pytest.fixture()
def config_dir(test_data_dir):
    """ Directory containing config test files. """
    yield Path(test_data_dir) / "config"


@pytest.fixture(autouse=True)
def set_config_search_path(config_dir, tmp_path):
    """ Override local configuration and output root for tests. """
    os.environ[APPNAME.upper() + "DIR"] = str(config_dir)
    os.environ[OUT_ENV] = str(tmp_path / "out")


@pytest.fixture()
def config_file(config_dir):
    """ Path to the test config file. """
    yield Path(config_dir) / "config.yaml"


@pytest.fixture()
def parser():
    """ Parser with test config. """
    yield ConfigParser()


@pytest.fixture()
def parser_default():
    """ Parser with default config. """
    yield ConfigParser(ignore_user=True)


@pytest.fixture()
def parser_minimal(config_dir):
    """ Parser with minimal config. """
    yield ConfigParser(Path(config_dir) / "config_minimal.yaml")


@pytest.fixture()
def parser_override(config_dir):
    """ Parser with overriding config. """
    yield ConfigParser(Path(config_dir) / "config_override.yaml")


@pytest.fixture()
def lattice3():
    """ Small 3D truncation. """
    yield get_lattice(3, 3)


@pytest.fixture()
def lattice2():
    """ Small 2D truncation. """
    yield get_lattice(2, 5)


@pytest.fixture()
def field3(lattice3):
    """ Random divergence-free 3D field with unit norm. """
    yield random_small(lattice3, amplitude=1.0, seed=42)


@pytest.fixture()
def rng():
    yield np.random.default_rng(0)
