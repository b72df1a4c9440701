import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import integrate

from bkfilter.dataset import Dataset
from bkfilter.exceptions import EmptyTrace, InvalidParameter, ParseError, SingularGram
from bkfilter.experiments import covariance_matrix
from bkfilter.gaussian import RngStream
from bkfilter.gibbs import (
    ChainConfig,
    KnockoffUpdate,
    LinearTrace,
    ProbitTrace,
    knockoff_conditional_moments,
    read_trace,
)
from bkfilter.gibbs_linear import (
    FlatPrior,
    GibbsStateLinear,
    LinearGibbsSampler,
    SpikeSlabPrior,
    make_prior,
    run_chain_linear,
    spikeslab_weights,
    update_coefficients_flat,
    update_coefficients_spikeslab,
    update_knockoff_rows_linear,
    update_sigma2,
)
from bkfilter.knockoff import sample_knockoffs_marginal, true_model
from bkfilter.selection import select_from_trace

from conftest import make_linear_data

def state_for(data, model, sigma2=1.0, seed=0):
    p = data.p
    xk = sample_knockoffs_marginal(model, data.x, RngStream(seed, stream=5))
    return GibbsStateLinear(np.zeros(p), np.zeros(p), sigma2, xk)

def exact_component_probabilities(x, xk, z, sigma2, xi, tau2):
    # integrate the unnormalized conditional over each active coefficient
    def log_lik_ratio(col, b):
        return -(b * b * (col @ col) - 2 * b * (col @ z)) / (2 * sigma2)

    def active_mass(col):
        var = 1 / (1 / tau2 + col @ col / sigma2)
        mu = var * (col @ z) / sigma2
        half = 15 * np.sqrt(var)

        def integrand(b):
            return np.exp(log_lik_ratio(col, b) - b * b / (2 * tau2) - mu * mu / (2 * var)) / np.sqrt(2 * np.pi * tau2)

        value, _ = integrate.quad(integrand, mu - half, mu + half, epsabs=0, epsrel=1e-12, limit=200)
        return value, mu * mu / (2 * var)

    active, shift = active_mass(x)
    knock, shift_k = active_mass(xk)
    top = max(shift, shift_k, 0.0)
    weights = np.array([
        (1 - xi) * np.exp(-top),
        xi / 2 * active * np.exp(shift - top),
        xi / 2 * knock * np.exp(shift_k - top),
        ])
    return weights / weights.sum()

def test_priors():
    assert isinstance(make_prior("flat"), FlatPrior)
    prior = make_prior("spike-slab", xi=0.2, tau2=2.0)
    assert (prior.xi, prior.tau2, prior.verbatim) == (0.2, 2.0, False)
    for bad in ({"xi": 0.0}, {"xi": 1.0}, {"tau2": 0.0}):
        with pytest.raises(InvalidParameter):
            SpikeSlabPrior(**bad)
    with pytest.raises(InvalidParameter):
        make_prior("laplace")

def test_chain_config_validation():
    assert ChainConfig(burn_in=10, samples=5, thin=3).total_sweeps == 25
    with pytest.raises(InvalidParameter, match="samples"):
        ChainConfig(samples=0)
    with pytest.raises(InvalidParameter, match="thin"):
        ChainConfig(thin=0)
    with pytest.raises(InvalidParameter, match="ridge"):
        ChainConfig(ridge=-1.0)

def test_chain_config_knockoff_update():
    assert ChainConfig().knockoff_update is KnockoffUpdate.MARGINAL
    config = ChainConfig(knockoff_update="conditional")
    assert config.knockoff_update is KnockoffUpdate.CONDITIONAL
    assert config.as_dict()["knockoff_update"] == "conditional"
    with pytest.raises(InvalidParameter, match="knockoff_update"):
        ChainConfig(knockoff_update="gibbs")

def test_flat_refuses_collinear_knockoff():
    x, y = make_linear_data(n=20, p=1, seed=1)
    data = Dataset(x, y)
    state = GibbsStateLinear(np.zeros(1), np.zeros(1), 1.0, x.copy())
    with pytest.raises(SingularGram):
        update_coefficients_flat(state, data, RngStream(0))

def test_flat_zero_response_shrinks_to_zero():
    x, _ = make_linear_data(n=50, p=2, seed=2)
    data = Dataset(x, np.zeros(50))
    model = true_model(np.eye(2))
    state = state_for(data, model, sigma2=1e-12)
    beta, betak = update_coefficients_flat(state, data, RngStream(1))
    assert_allclose(beta, 0.0, atol=1e-4)
    assert_allclose(betak, 0.0, atol=1e-4)

def test_flat_draws_center_on_least_squares():
    x, y = make_linear_data(n=500, p=5, beta=[1.0, -1.0, 0.5, 0.0, 0.0], seed=3)
    data = Dataset(x, y)
    state = state_for(data, true_model(np.eye(5)))
    z = np.hstack([x, state.xk])
    ols = np.linalg.lstsq(z, y, rcond=None)[0]
    sd = np.sqrt(np.diag(np.linalg.inv(z.T @ z)))
    rng = RngStream(2)
    draws = np.array([np.concatenate(update_coefficients_flat(state, data, rng)) for _ in range(2000)])
    assert np.all(np.abs(draws.mean(axis=0) - ols) <= 3 * sd)
    assert np.all(np.abs(draws.mean(axis=0) - ols) <= 5 * sd / np.sqrt(2000))
    assert_allclose(draws.std(axis=0), sd, rtol=0.1)

def test_spikeslab_symmetric_weights():
    prior = SpikeSlabPrior(xi=0.3, tau2=2.0)
    cond = spikeslab_weights(0.0, 0.0, 12.0, 12.0, 1.5, prior)
    assert cond.probabilities[1] == cond.probabilities[2]
    cond = spikeslab_weights(4.0, 4.0, 12.0, 12.0, 1.5, prior)
    assert_allclose(cond.probabilities[1], cond.probabilities[2], rtol=1e-15)
    assert_allclose(cond.probabilities.sum(), 1.0)

@pytest.mark.parametrize("seed", range(20))
def test_spikeslab_weights_match_quadrature(seed):
    rng = np.random.default_rng(seed)
    n = 20
    x = rng.standard_normal(n)
    xk = 0.5 * x + rng.standard_normal(n)
    z = rng.uniform(0.0, 0.4) * x + rng.standard_normal(n)
    sigma2 = rng.uniform(0.5, 2.0)
    xi = rng.uniform(0.05, 0.5)
    tau2 = rng.uniform(0.2, 3.0)
    cond = spikeslab_weights(x @ z, xk @ z, x @ x, xk @ xk, sigma2, SpikeSlabPrior(xi, tau2))
    expected = exact_component_probabilities(x, xk, z, sigma2, xi, tau2)
    assert_allclose(cond.probabilities, expected, rtol=1e-6)

@pytest.mark.parametrize("seed", range(20))
def test_spikeslab_verbatim_weights(seed):
    rng = np.random.default_rng(seed)
    xz, kz = rng.normal(size=2) * 3
    xx, kk = rng.uniform(5, 30, size=2)
    sigma2, xi, tau2 = rng.uniform(0.5, 2.0), rng.uniform(0.05, 0.5), rng.uniform(0.2, 3.0)
    cond = spikeslab_weights(xz, kz, xx, kk, sigma2, SpikeSlabPrior(xi, tau2, verbatim=True))
    var = 1 / (1 / tau2 + xx / sigma2)
    mu = var * xz / sigma2
    var_k = 1 / (1 / tau2 + kk / sigma2)
    mu_k = var_k * kz / sigma2
    weights = np.array([
        2 * (1 - xi),
        xi * np.sqrt(2 * np.pi * var) * np.exp(mu ** 2 / (2 * var)),
        xi * np.sqrt(2 * np.pi * var_k) * np.exp(mu_k ** 2 / (2 * var_k)),
        ])
    assert_allclose(cond.probabilities, weights / weights.sum(), rtol=1e-12)
    assert_allclose(cond.mean, mu)
    assert_allclose(cond.knockoff_variance, var_k)

def test_spikeslab_strong_signal_selects_active_component():
    x, _ = make_linear_data(n=50, p=1, seed=4)
    y = 3.0 * x[:, 0] + 0.1 * np.random.default_rng(5).standard_normal(50)
    data = Dataset(x, y)
    state = GibbsStateLinear(np.zeros(1), np.zeros(1), 0.01, np.random.default_rng(6).standard_normal((50, 1)))
    prior = SpikeSlabPrior(xi=0.1, tau2=1e4)
    rng = RngStream(3)
    active = 0
    for _ in range(2000):
        beta, _ = update_coefficients_spikeslab(state, prior, data, rng)
        active += beta[0] != 0.0
    assert active / 2000 > 0.99

def test_spikeslab_sweep_puts_exact_zeros():
    x, y = make_linear_data(n=40, p=30, beta=[2.0] + [0.0] * 29, seed=7)
    data = Dataset(x, y)
    state = state_for(data, true_model(np.eye(30)))
    beta, betak = update_coefficients_spikeslab(state, SpikeSlabPrior(), data, RngStream(4))
    assert np.all((beta == 0) | (betak == 0))
    assert np.sum((beta == 0) & (betak == 0)) > 0

def test_sigma2_concentrates():
    x, y = make_linear_data(n=10000, p=1, sigma=2.0, seed=8)
    data = Dataset(x, y)
    state = GibbsStateLinear(np.zeros(1), np.zeros(1), 1.0, np.zeros((10000, 1)))
    rng = RngStream(5)
    draws = np.array([update_sigma2(state, data, rng) for _ in range(200)])
    assert abs(draws.mean() - 4.0) <= 0.2
    assert np.all(np.abs(draws - 4.0) <= 0.5)

def test_sigma2_rate_floor():
    data = Dataset(np.ones((5, 1)), np.zeros(5))
    state = GibbsStateLinear(np.zeros(1), np.zeros(1), 1.0, np.zeros((5, 1)))
    value = update_sigma2(state, data, RngStream(6))
    assert 0 < value < 1e-9

def test_knockoff_update_reduces_to_prior_conditional():
    sigma = covariance_matrix("autocorr", 0.5, 4)
    model = true_model(sigma)
    x, y = make_linear_data(n=30, p=4, seed=9)
    beta = np.array([1.0, -0.5, 0.0, 2.0])
    means, cov = knockoff_conditional_moments(model, x, y, beta, np.zeros(4), 2.0)
    assert_allclose(means, x @ model.c.T, atol=1e-10)
    assert_allclose(cov, model.v, atol=1e-10)

def test_knockoff_update_vanishing_likelihood():
    model = true_model(covariance_matrix("equicorr", 0.3, 3))
    x, y = make_linear_data(n=10, p=3, seed=10)
    means, cov = knockoff_conditional_moments(model, x, y, np.ones(3), np.full(3, 0.7), 1e12)
    assert_allclose(means, x @ model.c.T, atol=1e-6)
    assert_allclose(cov, model.v, atol=1e-6)

def test_knockoff_update_shapes():
    x, y = make_linear_data(n=25, p=3, seed=11)
    data = Dataset(x, y)
    model = true_model(np.eye(3))
    state = state_for(data, model)
    state.betak = np.array([0.5, 0.0, -1.0])
    assert update_knockoff_rows_linear(state, model, data, RngStream(7)).shape == (25, 3)

def test_chain_shapes_and_iterations():
    x, y = make_linear_data(n=100, p=3, beta=[1.0, 0.0, 0.0], seed=12)
    trace = run_chain_linear(Dataset(x, y), true_model(np.eye(3)), config=ChainConfig(burn_in=10, samples=20, thin=3))
    assert isinstance(trace, LinearTrace)
    assert trace.beta.shape == trace.betak.shape == (20, 3)
    assert trace.sigma2.shape == (20,)
    assert trace.delta.shape == (20,)
    assert_array_equal(trace.iterations, 10 + 3 * np.arange(1, 21))
    assert np.all(trace.sigma2 > 0)

def test_chain_single_draw():
    x, y = make_linear_data(n=20, p=2, seed=13)
    trace = run_chain_linear(Dataset(x, y), true_model(np.eye(2)), config=ChainConfig(burn_in=0, samples=1))
    assert trace.samples == 1
    assert trace.posterior_summary().shape == (2, 4)

def test_chain_is_deterministic():
    x, y = make_linear_data(n=80, p=4, beta=[2.0, 0.0, 0.0, -1.0], seed=14)
    data = Dataset(x, y)
    model = true_model(np.eye(4))
    config = ChainConfig(burn_in=20, samples=50, seed=99)
    first = run_chain_linear(data, model, config=config)
    second = run_chain_linear(data, model, config=config)
    assert_array_equal(first.beta, second.beta)
    assert_array_equal(first.sigma2, second.sigma2)
    assert_array_equal(first.delta, second.delta)
    other = run_chain_linear(data, model, config=ChainConfig(burn_in=20, samples=50, seed=100))
    assert not np.array_equal(first.beta, other.beta)

def test_flat_prior_refused_when_wide():
    x, y = make_linear_data(n=10, p=5, seed=15)
    with pytest.raises(SingularGram):
        LinearGibbsSampler(Dataset(x, y), true_model(np.eye(5)), FlatPrior())

def test_spikeslab_chain_runs_when_wide():
    x, y = make_linear_data(n=40, p=30, beta=[3.0] + [0.0] * 29, seed=16)
    trace = run_chain_linear(Dataset(x, y), true_model(np.eye(30)), SpikeSlabPrior(),
                             ChainConfig(burn_in=20, samples=40, snapshot_every=10, random_scan=True))
    assert trace.beta.shape == (40, 30)
    assert np.mean(trace.beta[:, 0] != 0) > 0.5
    assert len(trace.snapshots) == 4
    assert trace.snapshots[0][1].shape == (40, 30)

def test_signal_recovered():
    x, y = make_linear_data(n=300, p=4, beta=[2.0, 0.0, 0.0, 0.0], seed=17)
    trace = run_chain_linear(Dataset(x, y), true_model(np.eye(4)), config=ChainConfig(burn_in=100, samples=300))
    summary = trace.posterior_summary()
    assert abs(summary["beta_mean"][0] - 2.0) < 0.3
    assert abs(summary["betak_mean"][0]) < 0.3

def test_trace_csv(tmp_path):
    x, y = make_linear_data(n=40, p=2, seed=18)
    trace = run_chain_linear(Dataset(x, y), true_model(np.eye(2)), config=ChainConfig(burn_in=5, samples=10))
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    assert path.read_text().splitlines()[0] == "iter,beta_1,beta_2,betak_1,betak_2,sigma2,delta"
    loaded = read_trace(path)
    assert isinstance(loaded, LinearTrace)
    assert_array_equal(loaded.beta, trace.beta)
    assert_array_equal(loaded.delta, trace.delta)

def test_read_trace_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("iter,beta_1,betak_1\n1,0.5,x\n")
    with pytest.raises(ParseError, match="betak_1"):
        read_trace(path)
    path.write_text("iter,beta_1,betak_1\n")
    with pytest.raises(EmptyTrace):
        read_trace(path)
    path.write_text("iter,alpha\n1,2\n")
    with pytest.raises(ParseError):
        read_trace(path)
    path.write_text("iter,beta_1,betak_1\n1,0.5,0.25\n")
    assert isinstance(read_trace(path), ProbitTrace)
    with pytest.raises(FileNotFoundError):
        read_trace(tmp_path / "absent.csv")

@pytest.mark.parametrize("update, follows_coefficients", [("marginal", False), ("conditional", True)])
def test_knockoff_rows_and_coefficients(update, follows_coefficients):
    x, y = make_linear_data(n=60, p=3, beta=[2.0, 0.0, 0.0], seed=19)
    rows = []
    for betak in ([0.0, 0.0, 0.0], [3.0, -2.0, 1.0]):
        sampler = LinearGibbsSampler(Dataset(x, y), true_model(np.eye(3)),
                                     config=ChainConfig(knockoff_update=update))
        sampler.state.betak = np.array(betak)
        rows.append(sampler.update_knockoffs())
    assert rows[0].shape == (60, 3)
    assert np.array_equal(rows[0], rows[1]) is not follows_coefficients

def test_response_offset_is_removed():
    x, y = make_linear_data(n=150, p=4, beta=[1.0, -1.0, 0.8, 0.0], seed=20)
    model = true_model(np.eye(4))
    config = ChainConfig(burn_in=50, samples=200, seed=5)
    plain = LinearGibbsSampler(Dataset(x, y), model, config=config)
    shifted = LinearGibbsSampler(Dataset(x, y + 50.0), model, config=config)
    assert shifted.response_mean == pytest.approx(plain.response_mean + 50.0)
    assert abs(shifted.data.y.mean()) < 1e-10
    first, second = plain.run(), shifted.run()
    assert_allclose(second.beta, first.beta, atol=1e-6)
    assert_allclose(second.sigma2, first.sigma2, rtol=1e-6)
    assert_array_equal(select_from_trace(second).selected, select_from_trace(first).selected)
    assert {0, 1, 2} <= set(select_from_trace(second).selected)
