import numpy as np
import pytest
import torch

from tsdiffuse.config import RunConfig


def small_config(**overrides):
    """Desk-scale config used across tests: narrow U-Net, one encoder layer."""
    cfg = RunConfig()
    cfg.unet.base_channels = 8
    cfg.unet.groupnorm_groups = 4
    cfg.unet.t_embed_dim = 16
    cfg.conditioner.width = 16
    cfg.conditioner.layers = 1
    cfg.conditioner.heads = 2
    cfg.conditioner.vocab_size = 256
    cfg.conditioner.max_len = 32
    cfg.schedule.T = 50
    cfg.trainer.batch_size = 16
    cfg.trainer.lr = 1e-3
    for key, value in overrides.items():
        cfg.set(key, value)
    return cfg


@pytest.fixture
def small_cfg():
    return small_config()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield


ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
