import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegenerateColumn,
    DimensionMismatch,
    InvalidParameter,
    NonFiniteInput,
    NotPositiveDefinite,
)
from .gaussian import CholeskyFactor, as_symmetric, cholesky, regularize_to_pd

logger = logging.getLogger(__name__)

# covariance regularization starts at this fraction of the mean diagonal
JITTER_SCALE = 1e-8

DEFAULT_SLACK = 0.95

def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a

###############################################################################
# MOMENTS
###############################################################################

@dataclass(frozen=True)
class MomentEstimate:
    """
    A Gaussian approximation MVN(mean, sigma) of the feature distribution.

    ``center`` and ``scale`` record the column transformation applied before
    the moments were computed; :meth:`transform` applies it to new rows.
    ``jitter`` is the ridge added to make ``sigma`` positive definite and
    ``n`` the number of rows used (0 when the covariance is known).
    """
    mean: np.ndarray
    sigma: np.ndarray
    jitter: float
    n: int
    center: np.ndarray
    scale: np.ndarray
    standardized: bool = False

    @property
    def p(self):
        return self.mean.shape[0]

    def transform(self, x):
        """
        Applies the column centering and scaling used for the estimate.

        :param x:
            An ``n x p`` matrix of feature rows.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.p:
            raise DimensionMismatch("expected rows with {} columns, got shape {}".format(self.p, x.shape))
        return (x - self.center) / self.scale

def known_moments(sigma, mean=None):
    """
    Wraps a known covariance (and mean) as a :class:`MomentEstimate`, for
    synthetic data whose generating distribution is known.

    :param sigma:
        The covariance matrix, positive definite.

    :param mean:
        The mean vector. Defaults to zero.
    """
    sigma = as_symmetric(sigma, "sigma")
    cholesky(sigma)
    p = sigma.shape[0]
    mean = np.zeros(p) if mean is None else np.asarray(mean, dtype=float)
    if mean.shape != (p,):
        raise DimensionMismatch("mean has shape {} but sigma is {}x{}".format(mean.shape, p, p))
    return MomentEstimate(
        mean=_frozen(mean), sigma=_frozen(sigma), jitter=0.0, n=0,
        center=_frozen(np.zeros(p)), scale=_frozen(np.ones(p)), standardized=False,
        )

def estimate_moments(data, standardize=True):
    """
    Fits the second-order approximation MVN(mu, sigma) to the feature rows.

    With ``standardize`` (the default) every column is centered and scaled to
    unit sample variance first, so the mean is zero and ``sigma`` is a
    correlation matrix. The covariance is regularized to be positive
    definite; the jitter used is recorded.

    :param data:
        An ``n x p`` matrix with ``n >= 2``.

    :param bool standardize:
        Whether to standardize the columns first. Defaults to :data:`True`.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch("feature data must be a matrix, got shape {}".format(x.shape))
    n, p = x.shape
    if n < 2:
        raise InvalidParameter("at least 2 rows are needed to estimate moments, got {}".format(n))
    if not np.all(np.isfinite(x)):
        row, col = np.argwhere(~np.isfinite(x))[0]
        raise NonFiniteInput("non-finite value at row {}, column {}".format(row + 1, col + 1))

    center = x.mean(axis=0)
    if standardize:
        scale = x.std(axis=0, ddof=1)
        degenerate = np.flatnonzero(scale <= 1e-12 * np.maximum(np.abs(center), 1.0))
        if degenerate.size:
            raise DegenerateColumn("column {} has zero variance".format(degenerate[0] + 1))
        z = (x - center) / scale
        mean = np.zeros(p)
    else:
        scale = np.ones(p)
        z = x
        mean = center
        center = np.zeros(p)

    sigma = as_symmetric(np.atleast_2d(np.cov(z, rowvar=False)), "sample covariance")
    sigma, jitter = regularize_to_pd(sigma, JITTER_SCALE * float(np.mean(np.diag(sigma))) or None)
    if standardize and jitter > 0:
        d = np.sqrt(np.diag(sigma))
        sigma = sigma / np.outer(d, d)

    return MomentEstimate(
        mean=_frozen(mean), sigma=_frozen(sigma), jitter=jitter, n=n,
        center=_frozen(center), scale=_frozen(scale), standardized=standardize,
        )

###############################################################################
# JOINT MODEL
###############################################################################

def _conditional_covariance(sigma_inv, s):
    return 2.0 * np.diag(s) - s[:, None] * sigma_inv * s[None, :]

def construct_s_equicorrelated(sigma, slack=DEFAULT_SLACK, strict=False):
    """
    Returns the equicorrelated knockoff diagonal
    ``s_j = slack * min(2 * lambda_min(sigma), 1)``.

    Any ``slack < 1`` leaves the conditional covariance strictly positive
    definite. At ``slack = 1`` it is singular whenever
    ``2 * lambda_min <= 1``; :func:`build_joint_model` rejects that case, or
    pass ``strict`` to reject it here.

    :param sigma:
        A positive definite correlation matrix.

    :param float slack:
        A factor in (0, 1]. Defaults to 0.95.

    :param bool strict:
        If :data:`True`, raise :exc:`NotPositiveDefinite` when the resulting
        conditional covariance is not strictly positive definite.
    """
    sigma = as_symmetric(sigma, "sigma")
    if not 0 < slack <= 1:
        raise InvalidParameter("slack must be in (0, 1], got {}".format(slack))
    if not np.allclose(np.diag(sigma), 1.0, rtol=0.0, atol=1e-8):
        raise InvalidParameter("sigma must be a correlation matrix (unit diagonal)")
    sigma_chol = cholesky(sigma)

    lambda_min = float(np.linalg.eigvalsh(sigma)[0])
    s = np.full(sigma.shape[0], slack * min(2.0 * lambda_min, 1.0))
    if strict:
        cholesky(_conditional_covariance(sigma_chol.inverse(), s))
    return s

@dataclass(frozen=True)
class KnockoffJointModel:
    """
    The joint Gaussian model of features and knockoffs,
    ``(X, X~) ~ MVN((mu, mu), G)`` with
    ``G = [[sigma, sigma - diag(s)], [sigma - diag(s), sigma]]``.

    For centered rows, ``X~ | X = x ~ MVN(C x, V)`` where
    ``C = I - diag(s) sigma^-1`` and
    ``V = 2 diag(s) - diag(s) sigma^-1 diag(s)``. ``A = V^-1`` enters the
    Gibbs full conditionals.

    Instances are immutable and may be shared between threads.
    """
    mean: np.ndarray
    sigma: np.ndarray
    s: np.ndarray
    c: np.ndarray
    v: np.ndarray
    v_chol: CholeskyFactor
    a: np.ndarray

    @property
    def p(self):
        return self.s.shape[0]

    @property
    def s_inverse(self):
        """
        Returns ``1 / s`` elementwise.
        """
        return 1.0 / self.s

    @property
    def joint_covariance(self):
        """
        Returns the ``2p x 2p`` covariance G of ``(X, X~)``.
        """
        off = self.sigma - np.diag(self.s)
        return np.block([[self.sigma, off], [off, self.sigma]])

def build_joint_model(moments, s):
    """
    Builds the joint knockoff model from feature moments and a knockoff
    diagonal.

    :param MomentEstimate moments:
        The feature mean and covariance.

    :param s:
        The knockoff diagonal, ``p`` non-negative entries.

    Raises :exc:`NotPositiveDefinite` when ``V`` is not strictly positive
    definite, e.g. for ``s = 0`` or an equicorrelated ``s`` with slack 1.
    """
    sigma = as_symmetric(moments.sigma, "sigma")
    p = sigma.shape[0]
    s = np.asarray(s, dtype=float)
    if s.shape != (p,):
        raise DimensionMismatch("s has shape {} but sigma is {}x{}".format(s.shape, p, p))
    if np.any(s < 0):
        raise InvalidParameter("s must be non-negative")

    sigma_inv = cholesky(sigma).inverse()
    c = np.eye(p) - s[:, None] * sigma_inv
    v = _conditional_covariance(sigma_inv, s)
    try:
        v_chol = cholesky(v)
    except NotPositiveDefinite:
        raise NotPositiveDefinite(
            "the knockoff conditional covariance is not positive definite; use a smaller s (slack < 1)") from None

    return KnockoffJointModel(
        mean=_frozen(moments.mean), sigma=_frozen(sigma), s=_frozen(s),
        c=_frozen(c), v=_frozen(v), v_chol=v_chol, a=_frozen(v_chol.inverse()),
        )

def true_model(sigma, slack=DEFAULT_SLACK):
    """
    Builds the joint model for a known correlation matrix with mean zero,
    using the equicorrelated diagonal.

    :param sigma:
        The generating correlation matrix.

    :param float slack:
        The equicorrelated slack. Defaults to 0.95.
    """
    moments = known_moments(sigma)
    return build_joint_model(moments, construct_s_equicorrelated(moments.sigma, slack))

def fit_joint_model(x, standardize=True, slack=DEFAULT_SLACK):
    """
    Estimates moments from the feature rows and builds the joint model.
    Returns ``(model, moments)``; use ``moments.transform(x)`` for the
    design the sampler sees.

    :param x:
        The ``n x p`` feature matrix.

    :param bool standardize:
        Whether to standardize columns first. Defaults to :data:`True`.

    :param float slack:
        The equicorrelated slack. Defaults to 0.95.
    """
    moments = estimate_moments(x, standardize=standardize)
    sigma = moments.sigma
    if not standardize:
        # the equicorrelated rule is defined on the correlation scale
        d = np.sqrt(np.diag(sigma))
        s = construct_s_equicorrelated(sigma / np.outer(d, d), slack) * d ** 2
    else:
        s = construct_s_equicorrelated(sigma, slack)
    model = build_joint_model(moments, s)
    logger.info("built knockoff model for p=%d (s=%.4g, jitter=%.3g)", model.p, float(s.min()), moments.jitter)
    return model, moments

###############################################################################
# SAMPLING AND DIAGNOSTICS
###############################################################################

def sample_knockoffs_marginal(model, x_rows, rng):
    """
    Draws one knockoff row per feature row from ``MVN(C x_i, V)``.

    :param KnockoffJointModel model:
        The joint model.

    :param x_rows:
        An ``n x p`` matrix of rows centered by the model mean.

    :param RngStream rng:
        The stream to draw from.
    """
    x = np.asarray(x_rows, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.p:
        raise DimensionMismatch("expected rows with {} columns, got shape {}".format(model.p, x.shape))
    if x.shape[0] == 0:
        return np.empty((0, model.p))
    return x @ model.c.T + rng.standard_normal(x.shape) @ model.v_chol.lower.T

def delta_statistic(x_rows, xk_rows):
    """
    Returns the knockoff validity statistic

    ``(1/n) sum_{j != k} sum_i (xk_ij xk_ik + 2 x_ij xk_ik - 3 x_ij x_ik)``

    summed over ordered pairs ``(j, k)``. Its expectation is zero for valid
    knockoffs.

    :param x_rows:
        The ``n x p`` feature rows, transformed as the model was fit.

    :param xk_rows:
        The ``n x p`` knockoff rows.
    """
    x = np.asarray(x_rows, dtype=float)
    xk = np.asarray(xk_rows, dtype=float)
    if x.shape != xk.shape or x.ndim != 2:
        raise DimensionMismatch("feature rows {} and knockoff rows {} differ in shape".format(x.shape, xk.shape))
    n = x.shape[0]
    if n == 0:
        return 0.0

    # sum_{j != k} a_j b_k = (sum_j a_j)(sum_k b_k) - sum_j a_j b_j
    sx = x.sum(axis=1)
    sk = xk.sum(axis=1)
    knock_knock = sk * sk - (xk * xk).sum(axis=1)
    orig_knock = sx * sk - (x * xk).sum(axis=1)
    orig_orig = sx * sx - (x * x).sum(axis=1)
    return float(np.sum(knock_knock + 2.0 * orig_knock - 3.0 * orig_orig) / n)
