import numpy as np
import pytest

from birkhoff.core.formats import parse_dataset
from birkhoff.core.model import Dataset


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)


@pytest.fixture
def cyclic() -> Dataset:
    return parse_dataset("a b\nb c\nc a\n")


@pytest.fixture
def cyclic_reversed() -> Dataset:
    return parse_dataset("a c\nc b\nb a\n")


@pytest.fixture
def latin3() -> Dataset:
    return parse_dataset("1 2 3\n2 3 1\n3 1 2\n")


@pytest.fixture
def rankings5() -> Dataset:
    return parse_dataset(
        """
        # five full rankings of four candidates
        1 2 3 4
        2 1 4 3
        1 3 2 4
        4 3 2 1
        2 4 1 3
        """
    )
