import numpy as np
import pytest

from fedpot.config import config_from_dict
from fedpot.dataset import LabeledDataset, SyntheticSpec, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_synthetic():
    return generate_synthetic(SyntheticSpec(dim=4, num_classes=3, per_class=20, spread=0.05, seed=7))


def make_dataset(features, labels, num_classes=None):
    labels = np.asarray(labels)
    return LabeledDataset(np.asarray(features, dtype=float), labels, num_classes or int(labels.max()) + 1)


def tiny_config(**overrides):
    """A few-second experiment: 4 SPSs, small blobs, 3 rounds."""
    base = {
        "seed": 3,
        "num_sps": 4,
        "rounds": 3,
        "dataset": {"synthetic": {"dim": 6, "num_classes": 4, "per_class": 40, "spread": 0.08}},
        "partition": {"mode": "iid"},
        "learner": {"hidden_sizes": [12], "epochs": 5, "batch_size": 8, "learning_rate": 0.3},
        "budget": {"total": 60.0},
    }
    for key, value in overrides.items():
        node = base
        parts = key.split("__")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return config_from_dict(base)


@pytest.fixture
def tiny():
    return tiny_config


ACCEPTANCE_LINES: list[str] = []


def acceptance_line(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
