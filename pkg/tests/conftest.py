import numpy as np
import pytest

from gwpcr.compositional import build_design


def two_cluster_data(n=12, seed=0, sep=2.0, noise=0.1, q=1, p=3):
    """Units 0..n/2-1 share one coefficient vector, the rest another."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=(n, p))
    x = u / u.sum(axis=1, keepdims=True)
    x2 = rng.uniform(size=(n, q))
    from gwpcr.compositional import helmert_projection, log_transform

    X1 = log_transform(x) @ helmert_projection(p).M1
    labels = (np.arange(n) >= n // 2).astype(int)
    beta = np.where(labels[:, None] == 0, sep, -sep) * np.ones((n, p - 1))
    y = np.einsum("ij,ij->i", X1, beta) + x2.sum(axis=1) + noise * rng.normal(size=n)
    return x, x2, y, labels


def separated_design(n=12, seed=0, noise=0.1):
    """Centered Gaussian design with two well-separated coefficient groups."""
    from gwpcr.compositional import TransformedDesign

    rng = np.random.default_rng(seed)
    X1 = rng.normal(size=(n, 2))
    X2 = rng.normal(size=(n, 1))
    labels = (np.arange(n) >= n // 2).astype(int)
    # centre X1 within each group so global centring adds no group offset
    for k in (0, 1):
        X1[labels == k] -= X1[labels == k].mean(axis=0)
    beta = np.where(labels[:, None] == 0, 2.0, -2.0) * np.ones((n, 2))
    y = (X1 * beta).sum(axis=1) + X2[:, 0] + noise * rng.normal(size=n)
    X1, X2, y = X1 - X1.mean(0), X2 - X2.mean(0), y - y.mean()
    return TransformedDesign(X1, X2, y), labels


@pytest.fixture
def two_cluster_design():
    return separated_design()


# ------------------------------------------------------- acceptance reporting

_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record one PASS/FAIL line per acceptance criterion; assert on the outcome."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append((number, line))
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
