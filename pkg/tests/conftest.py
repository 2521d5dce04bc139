import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bdris.channel import SubcarrierChannel, cascaded_matrices  # noqa: E402
from oracles import random_complex  # noqa: E402


def random_factored_channel(rng, n, s, lt=3, lr=3, static_scale=1.0):
    a_in = np.exp(2j * np.pi * rng.random((lt, n)))
    a_out = np.exp(2j * np.pi * rng.random((lr, n)))
    coeffs = random_complex(rng, s, lt, lr)
    static = static_scale * random_complex(rng, s)
    return cascaded_matrices(static, coeffs, a_in, a_out)


def random_dense_channel(rng, n, s, static_scale=1.0):
    return SubcarrierChannel.from_matrices(static_scale * random_complex(rng, s),
                                           random_complex(rng, s, n, n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
