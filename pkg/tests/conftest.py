import os

import numpy as np
import pytest

from weylkato.kato import RadialKatoPotential

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(autouse=True, scope="session")
def _isolated_cache(tmp_path_factory):
    old = os.environ.get("WEYL_CACHE_DIR")
    os.environ["WEYL_CACHE_DIR"] = str(tmp_path_factory.mktemp("weyl-cache"))
    yield
    if old is None:
        os.environ.pop("WEYL_CACHE_DIR", None)
    else:
        os.environ["WEYL_CACHE_DIR"] = old


@pytest.fixture
def singular_v():
    """eta = 1/2, gamma = 1 on the unit torus, centred in the middle."""
    return RadialKatoPotential(1.0, 0.5, center=(0.5, 0.5, 0.5), r_cut=0.4, L=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
