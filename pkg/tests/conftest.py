import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _fixed_torch_threads():
    # keep runs comparable on small CI boxes
    torch.set_num_threads(max(1, torch.get_num_threads()))
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
