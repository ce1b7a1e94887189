import sys

import numpy as np
import pytest


def ball_points(rng, n, d, radius=1.0):
    """Uniform points in the origin ball of the given radius."""
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return radius * g * rng.uniform(size=(n, 1)) ** (1.0 / d)


def random_factored(rng, n, r, t, positive=False):
    from w2approx.factored import FactoredMatrix

    if positive:
        V = rng.uniform(0.05, 1.0, (r, n))
        terms = [(rng.uniform(0, 1, n), rng.uniform(0, 1, n)) for _ in range(t)]
    else:
        V = rng.standard_normal((r, n))
        terms = [(rng.standard_normal(n), rng.standard_normal(n)) for _ in range(t)]
    return FactoredMatrix(V, rng.uniform(0.1, 2.0, n), rng.uniform(0.1, 2.0, n), terms)


@pytest.fixture
def rng(request):
    # stable per-test seed so failures reproduce
    return np.random.default_rng(sum(map(ord, request.node.name)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
