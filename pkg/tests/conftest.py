import sys
import os

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import pytest

from limitforce.services.permuton import MonotoneGeometric, SquareGeometric, Uniform


@pytest.fixture
def uniform():
    return Uniform()


@pytest.fixture
def monotone_half():
    return MonotoneGeometric(0.5)


@pytest.fixture
def square_half():
    return SquareGeometric(0.5)
