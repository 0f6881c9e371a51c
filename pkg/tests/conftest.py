import numpy as np
import pytest

from riesz_dml.kernels import DiscreteIdentity, Gaussian, KernelSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def dvx_spec():
    """Binary treatment (col 0), binary subcovariate (col 1), Gaussian covariate (col 2)."""
    return KernelSpec([DiscreteIdentity(0, (0, 1)), DiscreteIdentity(1, (0, 1)), Gaussian((2,), 1.0)])


def dvx_data(rng, n):
    return np.column_stack([rng.integers(0, 2, n), rng.integers(0, 2, n), rng.standard_normal(n)]).astype(float)


ACCEPTANCE = []


def record(number, name, ok, detail):
    """Log one acceptance criterion; the lines are repeated in the terminal summary."""
    line = f"criterion {number:>2}  {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
