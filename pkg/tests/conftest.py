import numpy as np
import pytest

from lss_basis.model import HybridInput, example_model
from lss_basis.signals import generate_input, generate_switching, simulate


@pytest.fixture
def model():
    return example_model()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def learning_run(model):
    """Noise-free learning data on the three-mode system."""
    phi = generate_switching(3, 2000, 10, seed=11, max_dwell=60)
    u = generate_input("harmonics", 2, 2000, seed=12)
    omega = HybridInput(phi, u)
    x0 = np.random.default_rng(13).standard_normal(3)
    return omega, simulate(model, omega, x0)


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
