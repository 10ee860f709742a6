from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def example1_jitters() -> dict[int, list[Fraction]]:
    return {
        1: [Fraction(1, 2), Fraction(-1, 2), Fraction(1, 2)],
        2: [Fraction(0), Fraction(1, 10), Fraction(0)],
        3: [Fraction(1, 10), Fraction(3, 10), Fraction(1, 2)],
    }
