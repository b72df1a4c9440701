import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .exceptions import InvalidParameter, NotPositiveDefinite, SingularGram
from .gaussian import cholesky, sample_inverse_gamma
from .gibbs import ChainConfig, GibbsSampler, LinearTrace, knockoff_conditional_draw

logger = logging.getLogger(__name__)

# the inverse gamma rate never drops below this, even for a perfect fit
RATE_FLOOR = 1e-12

###############################################################################
# PRIORS
###############################################################################

class FlatPrior:
    """
    The improper flat prior ``f(beta, betak) ∝ 1``. Needs ``n > 2p``.
    """
    name = "flat"

    def __str__(self):
        return "FlatPrior"

class SpikeSlabPrior:
    """
    The modified spike-and-slab prior. For every feature, both coefficients
    are zero with probability ``1 - xi``; otherwise exactly one of
    ``beta_j`` and ``betak_j`` (each with probability ``xi / 2``) is drawn
    from ``N(0, tau2)``.

    :param float xi:
        The prior probability that a feature pair is active, in (0, 1).
        Defaults to 0.1.

    :param float tau2:
        The slab variance. Defaults to 1.

    :param bool verbatim:
        Use the component weights as printed in the original derivation,
        which drop the slab normalizing constant. Only useful for
        comparison. Defaults to :data:`False`.
    """
    name = "spike-slab"

    def __init__(self, xi=0.1, tau2=1.0, verbatim=False):
        if not 0 < xi < 1:
            raise InvalidParameter("xi must be in (0, 1), got {}".format(xi))
        if not tau2 > 0:
            raise InvalidParameter("tau2 must be > 0, got {}".format(tau2))
        self._xi = float(xi)
        self._tau2 = float(tau2)
        self._verbatim = bool(verbatim)

    @property
    def xi(self):
        return self._xi

    @property
    def tau2(self):
        return self._tau2

    @property
    def verbatim(self):
        return self._verbatim

    def __str__(self):
        return "SpikeSlabPrior (xi={}, tau2={}{})".format(
            self._xi, self._tau2, ", verbatim" if self._verbatim else "")

def make_prior(name, xi=0.1, tau2=1.0, verbatim=False):
    """
    Returns the prior called ``name`` (``"flat"`` or ``"spike-slab"``).
    """
    if name == FlatPrior.name:
        return FlatPrior()
    if name == SpikeSlabPrior.name:
        return SpikeSlabPrior(xi, tau2, verbatim)
    raise InvalidParameter("unknown prior '{}' (expected 'flat' or 'spike-slab')".format(name))

###############################################################################
# STATE
###############################################################################

@dataclass
class GibbsStateLinear:
    beta: np.ndarray
    betak: np.ndarray
    sigma2: float
    xk: np.ndarray
    iteration: int = 0

###############################################################################
# FULL CONDITIONALS
###############################################################################

def update_coefficients_flat(state, data, rng):
    """
    Draws ``(beta, betak)`` jointly from
    ``MVN(G^-1 Z^T y, sigma2 G^-1)`` where ``Z = [X, X~]`` and
    ``G = Z^T Z``. Returns the pair and stores it in ``state``.

    :param GibbsStateLinear state:
        The current state.

    :param Dataset data:
        The (centered) dataset.

    :param RngStream rng:
        The stream to draw from.
    """
    z = np.hstack([data.x, state.xk])
    gram = z.T @ z
    try:
        chol = cholesky(gram)
    except NotPositiveDefinite:
        raise SingularGram(
            "the {0}x{0} Gram matrix of features and knockoffs is singular; "
            "use the spike-and-slab prior".format(gram.shape[0])) from None
    mean = chol.solve(z.T @ data.y)
    # G = L L^T, so L^-T e has covariance G^-1
    noise = solve_triangular(chol.lower.T, rng.standard_normal(mean.shape[0]), lower=False)
    draw = mean + np.sqrt(state.sigma2) * noise
    p = data.p
    state.beta, state.betak = draw[:p], draw[p:]
    return state.beta, state.betak

class SpikeSlabConditional(NamedTuple):
    """
    The full conditional of one coordinate pair under the spike-and-slab
    prior: the probabilities of the (null, feature active, knockoff active)
    components and the normal moments of the active components.
    """
    probabilities: np.ndarray
    mean: float
    variance: float
    knockoff_mean: float
    knockoff_variance: float

def spikeslab_weights(xz, kz, xx, kk, sigma2, prior):
    """
    Returns the :class:`SpikeSlabConditional` of ``(beta_j, betak_j)``.

    :param float xz:
        ``sum_i x_ij z_ij`` with ``z`` the partial residual excluding
        coordinate ``j``.

    :param float kz:
        ``sum_i xk_ij z_ij``.

    :param float xx:
        ``sum_i x_ij^2``.

    :param float kk:
        ``sum_i xk_ij^2``.

    :param float sigma2:
        The noise variance.

    :param SpikeSlabPrior prior:
        The prior.
    """
    if not sigma2 > 0:
        raise InvalidParameter("sigma2 must be > 0, got {}".format(sigma2))
    var = 1.0 / (1.0 / prior.tau2 + xx / sigma2)
    mu = var * xz / sigma2
    var_k = 1.0 / (1.0 / prior.tau2 + kk / sigma2)
    mu_k = var_k * kz / sigma2

    log_null = np.log(2.0 * (1.0 - prior.xi))
    if not prior.verbatim:
        log_null += 0.5 * np.log(2.0 * np.pi * prior.tau2)
    log_weights = np.array([
        log_null,
        np.log(prior.xi) + 0.5 * np.log(2.0 * np.pi * var) + mu ** 2 / (2.0 * var),
        np.log(prior.xi) + 0.5 * np.log(2.0 * np.pi * var_k) + mu_k ** 2 / (2.0 * var_k),
        ])
    probabilities = np.exp(log_weights - logsumexp(log_weights))
    return SpikeSlabConditional(probabilities, mu, var, mu_k, var_k)

def update_coefficients_spikeslab(state, prior, data, rng, random_scan=False):
    """
    Sweeps over the coordinate pairs ``(beta_j, betak_j)``, drawing each
    from its three-component full conditional given the others. Coordinates
    are visited in ascending order unless ``random_scan`` is set.

    :param GibbsStateLinear state:
        The current state; updated in place.

    :param SpikeSlabPrior prior:
        The prior.

    :param Dataset data:
        The (centered) dataset.

    :param RngStream rng:
        The stream to draw from.

    :param bool random_scan:
        Visit coordinates in a random permutation. Defaults to
        :data:`False`.
    """
    x, xk = data.x, state.xk
    beta, betak = state.beta.copy(), state.betak.copy()
    residual = data.y - x @ beta - xk @ betak
    xx = np.einsum("ij,ij->j", x, x)
    kk = np.einsum("ij,ij->j", xk, xk)

    order = rng.generator.permutation(data.p) if random_scan else range(data.p)
    for j in order:
        partial = residual + x[:, j] * beta[j] + xk[:, j] * betak[j]
        cond = spikeslab_weights(x[:, j] @ partial, xk[:, j] @ partial, xx[j], kk[j], state.sigma2, prior)
        component = min(int(np.searchsorted(np.cumsum(cond.probabilities), rng.uniform(), side="right")), 2)
        beta[j] = betak[j] = 0.0
        if component == 1:
            beta[j] = cond.mean + np.sqrt(cond.variance) * rng.standard_normal()
        elif component == 2:
            betak[j] = cond.knockoff_mean + np.sqrt(cond.knockoff_variance) * rng.standard_normal()
        residual = partial - x[:, j] * beta[j] - xk[:, j] * betak[j]

    state.beta, state.betak = beta, betak
    return beta, betak

def update_sigma2(state, data, rng):
    """
    Draws the noise variance from ``IG(n/2, RSS/2)``. The rate is floored
    at :data:`RATE_FLOOR`.
    """
    residual = data.y - data.x @ state.beta - state.xk @ state.betak
    rate = max(float(residual @ residual) / 2.0, RATE_FLOOR)
    state.sigma2 = float(sample_inverse_gamma(data.n / 2.0, rate, rng))
    return state.sigma2

def update_knockoff_rows_linear(state, model, data, rng):
    """
    Redraws every knockoff row from
    ``MVN(mu~_i, (A + betak betak^T / sigma2)^-1)``.
    """
    state.xk = knockoff_conditional_draw(model, data.x, data.y, state.beta, state.betak, state.sigma2, rng)
    return state.xk

###############################################################################
# SAMPLER
###############################################################################

class LinearGibbsSampler(GibbsSampler):
    """
    The knockoff Gibbs sampler for the Gaussian linear model
    ``y = X beta + X~ betak + e``, ``e ~ N(0, sigma2 I)``.

    The model has no intercept, so the response is centered first; its
    mean is :attr:`response_mean`. Every sweep draws the coefficients,
    then ``sigma2``, then the knockoff rows.

    :param Dataset data:
        The dataset.

    :param KnockoffJointModel model:
        The joint knockoff model.

    :param prior:
        A :class:`FlatPrior` or :class:`SpikeSlabPrior`. Defaults to flat.

    :param ChainConfig config:
        The chain settings.
    """
    def __init__(self, data, model, prior=None, config=None):
        self._prior = prior if prior is not None else FlatPrior()
        super().__init__(data, model, config)

    @property
    def prior(self):
        return self._prior

    @property
    def response_mean(self):
        """
        Returns the mean subtracted from the response.
        """
        return self._response_mean

    def _center(self, data):
        data = super()._center(data)
        self._response_mean = float(data.y.mean()) if data.n else 0.0
        return data.with_response(data.y - self._response_mean)

    def _check(self):
        n, p = self.data.n, self.data.p
        if isinstance(self._prior, FlatPrior) and 2 * p >= n:
            raise SingularGram(
                "the flat prior needs n > 2p (n={}, p={}); use the spike-and-slab prior".format(n, p))

    def _initial_state(self, xk):
        p = self.data.p
        sigma2 = float(np.var(self.data.y))
        return GibbsStateLinear(np.zeros(p), np.zeros(p), sigma2 if sigma2 > 0 else 1.0, xk)

    def _conditional_knockoffs(self):
        return update_knockoff_rows_linear(self.state, self.model, self.data, self._rng)

    def sweep(self):
        if isinstance(self._prior, SpikeSlabPrior):
            update_coefficients_spikeslab(self.state, self._prior, self.data, self._rng, self.config.random_scan)
        else:
            update_coefficients_flat(self.state, self.data, self._rng)
        update_sigma2(self.state, self.data, self._rng)
        self.update_knockoffs()

    def _extra_draws(self):
        return {"sigma2": self.state.sigma2}

    def _make_trace(self, draws, common):
        return LinearTrace(draws["beta"], draws["betak"], np.array(draws["sigma2"]), **common)

def run_chain_linear(data, model, prior=None, config=None):
    """
    Runs one linear-model chain and returns its :class:`LinearTrace`.

    :param Dataset data:
        The dataset, transformed as the model was fit.

    :param KnockoffJointModel model:
        The joint knockoff model.

    :param prior:
        The coefficient prior. Defaults to :class:`FlatPrior`.

    :param ChainConfig config:
        The chain settings. Defaults to ``ChainConfig()``.
    """
    return LinearGibbsSampler(data, model, prior, config if config is not None else ChainConfig()).run()
