import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .dataset import ResponseKind
from .exceptions import InvalidParameter, NotPositiveDefinite, SeparationWarning, SingularGram
from .gaussian import cholesky, sample_truncated_normal_many
from .gibbs import ChainConfig, GibbsSampler, ProbitTrace, knockoff_conditional_draw

logger = logging.getLogger(__name__)

# a retained coefficient norm above this suggests complete separation
SEPARATION_NORM = 1e3

@dataclass
class GibbsStateProbit:
    beta: np.ndarray
    betak: np.ndarray
    u: np.ndarray
    xk: np.ndarray
    iteration: int = 0

def update_coefficients_probit(state, data, rng, ridge=0.0):
    """
    Draws ``(beta, betak)`` from ``MVN(S Z^T u, S)`` with ``Z = [X, X~]``
    and ``S = (Z^T Z + ridge I)^-1``.

    :param GibbsStateProbit state:
        The current state; updated in place.

    :param Dataset data:
        The (centered) dataset.

    :param RngStream rng:
        The stream to draw from.

    :param float ridge:
        Added to the Gram diagonal. Defaults to 0.
    """
    z = np.hstack([data.x, state.xk])
    gram = z.T @ z
    if ridge:
        gram[np.diag_indices_from(gram)] += ridge
    try:
        chol = cholesky(gram)
    except NotPositiveDefinite:
        raise SingularGram(
            "the {0}x{0} Gram matrix of features and knockoffs is singular; "
            "set a ridge (e.g. 1e-6)".format(gram.shape[0])) from None
    mean = chol.solve(z.T @ state.u)
    draw = mean + solve_triangular(chol.lower.T, rng.standard_normal(mean.shape[0]), lower=False)
    state.beta, state.betak = draw[:data.p], draw[data.p:]
    return state.beta, state.betak

def update_latents(state, data, rng):
    """
    Redraws every latent ``u_i`` from ``N(x_i beta + xk_i betak, 1)``
    truncated to ``(0, inf)`` when ``y_i = 1`` and ``(-inf, 0)`` otherwise.
    """
    eta = data.x @ state.beta + state.xk @ state.betak
    positive = data.y == 1
    lower = np.where(positive, 0.0, -np.inf)
    upper = np.where(positive, np.inf, 0.0)
    state.u = sample_truncated_normal_many(eta, lower, upper, rng)
    return state.u

def update_knockoff_rows_probit(state, model, data, rng):
    """
    Redraws every knockoff row; the linear update with ``sigma2 = 1`` and
    the latents in place of the response.
    """
    state.xk = knockoff_conditional_draw(model, data.x, state.u, state.beta, state.betak, 1.0, rng)
    return state.xk

class ProbitGibbsSampler(GibbsSampler):
    """
    The augmented knockoff Gibbs sampler for a binary response under the
    probit model with a flat coefficient prior. Every sweep draws the
    coefficients, then the latents, then the knockoff rows.

    A constant response, or coefficient draws whose norm exceeds
    :data:`SEPARATION_NORM`, raise a :class:`SeparationWarning`; the chain
    still runs.
    """
    def _check(self):
        data = self.data
        if data.kind is not ResponseKind.PROBIT:
            raise InvalidParameter("the probit sampler needs a 0/1 response")
        if self.config.ridge == 0 and 2 * data.p >= data.n:
            raise SingularGram(
                "the flat probit prior needs n > 2p (n={}, p={}); set a ridge".format(data.n, data.p))
        if data.n and np.all(data.y == data.y[0]):
            warnings.warn(SeparationWarning(
                "the response is constant ({}); coefficient draws will drift".format(int(data.y[0]))))

    def _initial_state(self, xk):
        p = self.data.p
        # latents start on the correct side of zero
        u = np.where(self.data.y == 1, 0.5, -0.5)
        return GibbsStateProbit(np.zeros(p), np.zeros(p), u, xk)

    def _conditional_knockoffs(self):
        return update_knockoff_rows_probit(self.state, self.model, self.data, self._rng)

    def sweep(self):
        update_coefficients_probit(self.state, self.data, self._rng, self.config.ridge)
        update_latents(self.state, self.data, self._rng)
        self.update_knockoffs()

    def _snapshot_extras(self):
        return {"latents": self.state.u.copy()}

    def _make_trace(self, draws, common):
        return ProbitTrace(draws["beta"], draws["betak"], latents=draws.get("latents"), **common)

    def _finish(self, trace):
        norms = np.sqrt((trace.beta ** 2).sum(axis=1) + (trace.betak ** 2).sum(axis=1))
        largest = float(norms.max())
        if largest > SEPARATION_NORM:
            warnings.warn(SeparationWarning(
                "coefficient norm reached {:.3g} after burn-in; the data may be completely separated".format(
                    largest)))

def run_chain_probit(data, model, config=None):
    """
    Runs one probit chain and returns its :class:`ProbitTrace`.

    :param Dataset data:
        A dataset with a 0/1 response, transformed as the model was fit.

    :param KnockoffJointModel model:
        The joint knockoff model.

    :param ChainConfig config:
        The chain settings (including ``ridge``). Defaults to
        ``ChainConfig()``.
    """
    return ProbitGibbsSampler(data, model, config if config is not None else ChainConfig()).run()
