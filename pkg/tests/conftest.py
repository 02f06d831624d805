import copy

import pytest
import torch

from advface import desk
from advface.generator import StyleGenerator

ACCEPTANCE_LINES: list[str] = []


def report(name: str, passed: bool, detail: str) -> bool:
    """Record one acceptance line; printed in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def gen():
    return desk.desk_generator()


@pytest.fixture(scope="session")
def gen64(gen):
    return copy.deepcopy(gen).to(torch.float64)


@pytest.fixture(scope="session")
def zoo():
    return desk.desk_zoo()


@pytest.fixture(scope="session")
def phi():
    return desk.desk_feature_extractor()


@pytest.fixture(scope="session")
def emb():
    return desk.desk_embedder()


@pytest.fixture()
def tiny_gen():
    return StyleGenerator(layer_count=4, style_dim=8, image_size=8, channels=4, seed=3).eval().requires_grad_(False)


@pytest.fixture(scope="session")
def zoo64(zoo):
    return {k: copy.deepcopy(v).to(torch.float64) for k, v in zoo.items()}


@pytest.fixture(scope="session")
def phi64(phi):
    return copy.deepcopy(phi).to(torch.float64)


@pytest.fixture(scope="session")
def emb64(emb):
    return copy.deepcopy(emb).to(torch.float64)
