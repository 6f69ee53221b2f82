import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stancegraph.graph import build_bipartite
from stancegraph.propagation import PropagationConfig

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


HAND_POSTS = [("u1", ["#h1", "#h1", "#h1", "#h3"]),
              ("u2", ["#h2", "#h2", "#h3", "#h3"]),
              ("u3", ["#h3"] * 5)]


@pytest.fixture
def hand_graph():
    """Three users, three hashtags; h1 seeds S1 and h2 seeds S2."""
    return build_bipartite(HAND_POSTS)


@pytest.fixture
def hand_config():
    return PropagationConfig(["h1"], ["h2"])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion; a criterion passes only if all its tests do
    outcome = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            n = dict(getattr(rep, "user_properties", ())).get("criterion")
            if n is None or (key == "passed" and rep.when != "call"):
                continue
            outcome[n] = outcome.get(n, True) and key == "passed"
    if outcome:
        terminalreporter.section("acceptance criteria")
        for n in sorted(outcome):
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if outcome[n] else 'FAIL'}")


@pytest.fixture(autouse=True)
def _criterion_tag(request):
    marker = request.node.get_closest_marker("criterion")
    if marker:
        request.node.user_properties.append(("criterion", marker.args[0]))
