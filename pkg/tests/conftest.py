import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", deadline=None, max_examples=50)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rel(a, b):
    return float(np.linalg.norm(np.ravel(a - b)) / max(np.linalg.norm(np.ravel(b)), 1e-300))


def random_coverage(g, n_sets, universe=30, max_size=8):
    sets = [g.choice(universe, size=int(g.integers(1, max_size + 1)), replace=False).tolist()
            for _ in range(n_sets)]
    weights = {e: float(w) for e, w in enumerate(g.integers(1, 6, size=universe))}
    return sets, weights


def reference_greedy(f, n, budget, init=()):
    """Textbook greedy: scan candidates in index order, keep the first maximal gain."""
    chosen = list(init)
    while len(chosen) < budget:
        base = f(chosen)
        best, best_gain = None, None
        for c in range(n):
            if c in chosen:
                continue
            gain = f(chosen + [c]) - base
            if best_gain is None or gain > best_gain:
                best, best_gain = c, gain
        if best is None:
            break
        chosen.append(best)
    return chosen


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def _report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
