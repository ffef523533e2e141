import numpy as np
import pytest

from planefit.data import cyg_ob1
from planefit.geometry import Dataset


@pytest.fixture(scope="session")
def stars() -> Dataset:
    return cyg_ob1()


@pytest.fixture(scope="session")
def stars10() -> Dataset:
    return cyg_ob1(10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
