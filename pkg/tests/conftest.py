import numpy as np
import pytest

from reduktor.presets import bathless_diagonal_model, random_model, spin_flip_model


@pytest.fixture(scope="session")
def spin_model():
    return spin_flip_model()


@pytest.fixture(scope="session")
def identity_model():
    return bathless_diagonal_model()


@pytest.fixture(scope="session")
def generic_model():
    return random_model(3, 2, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
