import numpy as np
import pytest

from akda import kernels, scatter


def random_problem(rng, n, n_classes, kind="rbf", dim=None):
    """Random data, centered Gram and partition; every class gets >= 1 sample."""
    dim = dim or int(rng.integers(2, 6))
    X = rng.standard_normal((n, dim))
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    spec = kernels.KernelSpec(kind, gamma=1.0 / dim, degree=2)
    bundle = kernels.center_gram(kernels.gram_matrix(spec, X))
    return X, labels, bundle, scatter.build_partition(labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
