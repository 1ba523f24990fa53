import numpy as np
import pytest
from hypothesis import settings

from sensei.nn import MlpModel

settings.register_profile("default", deadline=None, print_blob=True)
settings.load_profile("default")

# criterion number -> (title, passed); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def random_model(rng, n_in, n_hidden, n_classes, scale=1.0):
    return MlpModel(
        rng.normal(0, scale, (n_hidden, n_in)),
        rng.normal(0, scale, n_hidden),
        rng.normal(0, scale, (n_classes, n_hidden)),
        rng.normal(0, scale, n_classes),
    )


def linear_model(w, b=None):
    """Exact linear logits ``W z + b`` through paired ReLUs: relu(u) - relu(-u) = u."""
    w = np.asarray(w, dtype=np.float64)
    k, d = w.shape
    eye = np.eye(d)
    return MlpModel(np.vstack([eye, -eye]), np.zeros(2 * d), np.hstack([w, -w]),
                    np.zeros(k) if b is None else np.asarray(b, dtype=np.float64))


def constant_model(n_in, n_hidden=3, n_classes=2, bias=None):
    return MlpModel(np.zeros((n_hidden, n_in)), np.zeros(n_hidden), np.zeros((n_classes, n_hidden)),
                    np.zeros(n_classes) if bias is None else np.asarray(bias, dtype=np.float64))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
