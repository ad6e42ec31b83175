import numpy as np
import pytest

from longdina.measurement import ItemParams, QMatrix
from longdina.simulate import builtin_qmatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


@pytest.fixture
def q6() -> QMatrix:
    return builtin_qmatrix(6)


@pytest.fixture
def items6(rng) -> ItemParams:
    return ItemParams(guess=rng.uniform(0.15, 0.25, 6), slip=rng.uniform(0.15, 0.25, 6))
