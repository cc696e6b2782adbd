import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qpace.dla import lie_closure, matchgate_generators
from qpace.models import ModelSpec, generate_dataset


@pytest.fixture(scope="session")
def cluster_spec():
    return ModelSpec.cluster(8)


@pytest.fixture(scope="session")
def xxz_spec():
    return ModelSpec.xxz(8)


@pytest.fixture(scope="session")
def cluster_train(cluster_spec):
    return generate_dataset(cluster_spec, 50, seed=11, role="train")


@pytest.fixture(scope="session")
def cluster_test_small(cluster_spec):
    return generate_dataset(cluster_spec, 100, seed=12, role="test")


@pytest.fixture(scope="session")
def matchgate_basis():
    return lie_closure(matchgate_generators(8))


@pytest.fixture()
def rng():
    return np.random.default_rng(20240501)
