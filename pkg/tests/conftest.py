import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile(
    "deterministic", deadline=None, derandomize=True, max_examples=25
)
hypothesis.settings.load_profile("deterministic")


@pytest.fixture
def rng():
    from recfno.rng import Rng

    return Rng(20240817)


@pytest.fixture(autouse=True)
def _clear_tape():
    from recfno import tensor as T

    T.active_tape().clear()
    yield
    T.active_tape().clear()
