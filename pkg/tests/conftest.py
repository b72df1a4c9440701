import numpy as np
import pandas as pd
import pytest

def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte Carlo tests")

def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo checks, run with --runslow")

def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)

def make_linear_data(n=200, p=5, beta=None, sigma=1.0, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    beta = np.zeros(p) if beta is None else np.asarray(beta, dtype=float)
    y = x @ beta + sigma * rng.standard_normal(n)
    return x, y

@pytest.fixture
def linear_csv(tmp_path):
    x, y = make_linear_data(n=120, p=4, beta=[3.0, 0.0, -2.0, 0.0], seed=11)
    frame = pd.DataFrame(x, columns=["age", "dose", "weight", "noise"])
    frame["y"] = y
    path = tmp_path / "data.csv"
    frame.to_csv(path, index=False)
    return path

@pytest.fixture
def probit_csv(tmp_path):
    x, eta = make_linear_data(n=150, p=3, beta=[2.0, 0.0, 0.0], seed=12)
    frame = pd.DataFrame(x, columns=["a", "b", "c"])
    frame["outcome"] = (eta > 0).astype(int)
    path = tmp_path / "binary.csv"
    frame.to_csv(path, index=False)
    return path
