import os

import numpy as np
import pytest
import yaml

from src.applications import CrraParams, crra_model, quadratic_cs_model
from src.conditions import GridSpec
from src.model_core import Posterior

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'configs')
SEED = 20240611


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full-resolution sweeps (deselect with -m "not slow")')


@pytest.fixture
def rng():
    """Seeded generator shared by the randomized tests."""
    return np.random.default_rng(SEED)


@pytest.fixture
def cs_model():
    """Quadratic loss for both parties (V = U)."""
    return quadratic_cs_model(b=0.0)


@pytest.fixture
def cs_biased():
    return quadratic_cs_model(b=0.2)


@pytest.fixture
def crra_suboptimal():
    return crra_model(CrraParams(gamma=2.0, rho=0.0))


@pytest.fixture
def crra_optimal():
    return crra_model(CrraParams(gamma=0.5, rho=0.0))


@pytest.fixture
def random_crra(rng):
    """Factory for CRRA models with gamma and rho kept away from 1."""
    def _make():
        while True:
            gamma, rho = (float(x) for x in rng.uniform(0.0, 2.5, 2))
            if abs(gamma - 1) > 0.05 and abs(rho - 1) > 0.05:
                return crra_model(CrraParams(gamma, rho, delta=float(rng.uniform(0.3, 0.7))))
    return _make


@pytest.fixture
def random_posterior(rng):
    """Factory for posteriors on n distinct lattice states in [lo, hi]."""
    def _make(lo, hi, n):
        states = np.sort(rng.choice(np.linspace(lo, hi, 21), size=n, replace=False))
        return Posterior(tuple(states), tuple(rng.dirichlet(np.ones(n))))
    return _make


@pytest.fixture
def unit_grid():
    return GridSpec.uniform((0.0, 1.0), (0.0, 1.0), 41, 41)


@pytest.fixture
def small_grid():
    return GridSpec.uniform((0.0, 1.0), (0.0, 1.0), 11, 11)


@pytest.fixture
def config_path():
    def _path(name):
        return os.path.join(CONFIG_DIR, name)
    return _path


@pytest.fixture
def write_config(tmp_path):
    """Dump a config dict to YAML under tmp_path and return the path."""
    def _write(data, name='run.yaml'):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data, sort_keys=False))
        return str(path)
    return _write


@pytest.fixture
def cs_config():
    return {
        'model': {'family': 'quadratic_cs', 'params': {'b': 0.2}},
        'domains': {'state': [0.0, 1.0]},
        'grid': {'states': 11, 'actions': 11, 'action_range': [0.0, 1.0]},
        'prior': {'support': [0.2, 0.8], 'probabilities': [0.5, 0.5]},
        'checks': ['weak'],
    }


@pytest.fixture
def crra_config():
    return {
        'model': {'family': 'crra', 'params': {'gamma': 2.0, 'rho': 0.0}},
        'domains': {'state': [1.0, 2.0]},
        'grid': {'states': 21, 'actions': 41},
        'prior': {'support': [1.0, 2.0]},
        'checks': ['weak', 'subopt'],
    }
