from __future__ import annotations

import numpy as np
import pytest
import torch

from telecodec.codec.config import ModelConfig

torch.set_num_threads(1)

TINY = dict(channels=(4, 8, 8, 16, 16), lstm_layers=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return ModelConfig(**TINY, n_quantizers=2, seed=0)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    from telecodec.dataset import build_dataset

    root = tmp_path_factory.mktemp("ds_small")
    return build_dataset(root, n_train=6, n_val=2, n_test=2, seed=5)


# filled by test_acceptance and echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
