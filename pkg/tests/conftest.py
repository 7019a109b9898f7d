import numpy as np
import pytest

from snapsci.core import MaskStack, SensingOperator, make_masks, make_operator


def random_operator(rng, mode="cacti", max_dim=6):
    nx, ny, nt = (int(v) for v in rng.integers(1, max_dim + 1, size=3))
    masks = rng.standard_normal((nx, ny, nt))
    step = int(rng.integers(0, 3))
    ref = int(rng.integers(0, nt))
    return SensingOperator(MaskStack(masks, "gaussian"), mode, step, ref)


def two_by_two():
    m = np.zeros((2, 2, 2))
    m[:, :, 0] = [[1, 0], [0, 1]]
    m[:, :, 1] = [[0, 1], [1, 0]]
    x = np.zeros((2, 2, 2))
    x[:, :, 0] = [[1, 2], [3, 4]]
    x[:, :, 1] = [[5, 6], [7, 8]]
    return make_operator(MaskStack(m, "explicit")), x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_scene():
    from snapsci.scenes import make_scene

    truth = make_scene("moving-square", 32, 32, 4, 0)
    op = make_operator(make_masks("bernoulli", 32, 32, 4, 0.5, seed=11))
    return truth, op, op.apply(truth)


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
