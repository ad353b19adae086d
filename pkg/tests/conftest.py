"""Shared solved plans; each size is solved once per session."""

from functools import lru_cache

import pytest

from kiteot import ot_semidiscrete as sd
from kiteot.potential_analysis import PotentialField


@lru_cache(maxsize=None)
def plan_for(n: int, seed: int = 0, symmetrize: bool = True) -> sd.SemiDiscretePlan:
    return sd.solve(sd.discretize_target(n, seed=seed, symmetrize=symmetrize))


@lru_cache(maxsize=None)
def field_for(n: int, seed: int = 0, symmetrize: bool = True) -> PotentialField:
    return PotentialField(plan_for(n, seed, symmetrize))


@pytest.fixture(scope="session")
def plan_1000():
    return plan_for(1000)


@pytest.fixture(scope="session")
def field_2000():
    return field_for(2000)


@pytest.fixture(scope="session")
def field_5000():
    return field_for(5000)


@pytest.fixture(scope="session")
def field_10000():
    return field_for(10000)
