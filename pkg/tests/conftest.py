from pathlib import Path

import numpy as np
import pytest

from fheede import homomorphic as H, params

DATA = Path(__file__).parent / "data"


def phase_oracle(s, c, q):
    """Centered <c, s> computed with Python integers."""
    v = sum(int(a) * int(b) for a, b in zip(c, s)) % q
    return v - q if v > q // 2 else v


def dec_oracle(s, c, q):
    return phase_oracle(s, c, q) % 2


def noise_oracle(s, c, q, m):
    return abs(phase_oracle(s, c, q) - m)


@pytest.fixture(scope="session")
def toy():
    return params.toy_profile()


@pytest.fixture(scope="session")
def toy_keys(toy):
    return H.generate_keys(toy, np.random.default_rng(2024))


@pytest.fixture
def ctx(toy_keys):
    return H.client_context(toy_keys, np.random.default_rng(7))


@pytest.fixture(scope="session")
def lena():
    from fheede.io_serde import read_pgm
    return read_pgm(DATA / "lena.pgm")


@pytest.fixture(scope="session")
def small_image(lena):
    return lena[200:216, 200:216].copy()


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
