import numpy as np
import pytest

import penrt.model_selection as ms
import penrt.svm.model as svm_model
from penrt.svm import _smo_py

try:
    from penrt.svm import _smo_ext
except ImportError:  # extension not built
    _smo_ext = None

CORES = [_smo_py] + ([_smo_ext] if _smo_ext is not None else [])


@pytest.fixture(params=CORES, ids=lambda c: c.NAME)
def core(request, monkeypatch):
    """Run the test once per available SMO core."""
    monkeypatch.setattr(svm_model, "core", request.param)
    monkeypatch.setattr(ms, "core", request.param)
    return request.param


@pytest.fixture(scope="session")
def reference_cohort():
    from penrt.synth import reference_spec, sample_cohort

    return sample_cohort(reference_spec(42))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
