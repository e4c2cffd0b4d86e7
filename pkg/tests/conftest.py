import numpy as np
import pytest

from csclasso import GroupedDataset


def random_instance(seed, n=100, p=10, L=2, noise=1.0, overlap=False):
    """Gaussian design with a sparse signal and ``L`` row groups."""
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, p))
    beta = np.zeros(p)
    k = max(1, p // 3)
    beta[rng.choice(p, k, replace=False)] = rng.uniform(0.5, 2.0, k) * rng.choice([-1, 1], k)
    y = 0.3 + Z @ beta + noise * rng.standard_normal(n)
    if overlap:
        groups = [rng.choice(n, n // 2, replace=False) for _ in range(L)]
    else:
        groups = np.array_split(rng.permutation(n), L + 1)[:L]
    return GroupedDataset.from_predictors(Z, y, [np.sort(g) for g in groups])


def one_predictor_two_groups(seed=0, n=40):
    """Two halves whose slopes disagree, one predictor."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    half = n // 2
    y = np.where(np.arange(n) < half, 2.0 * z + 1.0, -z) + 0.3 * rng.standard_normal(n)
    return GroupedDataset.from_predictors(z, y, [np.arange(half), np.arange(half, n)])


@pytest.fixture
def instance():
    return random_instance(0)


@pytest.fixture
def instance_factory():
    return random_instance


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
