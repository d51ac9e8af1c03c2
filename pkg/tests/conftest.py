import numpy as np
import pytest

from qldlab import qcore


@pytest.fixture(autouse=True, scope="session")
def strict_checks():
    qcore.set_strict_checks(True)
    yield
    qcore.set_strict_checks(False)


@pytest.fixture
def rng():
    return np.random.default_rng(20250810)
