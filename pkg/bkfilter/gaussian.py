import hashlib
import logging

import numpy as np
from scipy import linalg
from scipy.special import ndtr, ndtri

from .exceptions import (
    DimensionMismatch,
    EmptyInterval,
    InvalidParameter,
    NotPositiveDefinite,
    RegularizationFailed,
)

logger = logging.getLogger(__name__)

# standardized distance from the mean beyond which the inverse CDF gives way
# to exponential rejection
TRUNCNORM_TAIL = 6.0

MAX_DOUBLINGS = 60

###############################################################################
# RANDOM STREAMS
###############################################################################

def stable_seed(master, *keys):
    """
    Derives a 63-bit seed from a master seed and any number of keys. The
    result only depends on the values passed, so replications can be seeded
    independently of the order in which they are scheduled.

    :param int master:
        The master seed.

    :param keys:
        Values (ints, floats or strings) identifying the stream, e.g. a
        replication index.
    """
    payload = ":".join(str(k) for k in (master,) + keys).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little") >> 1

class RngStream:
    """
    A reproducible stream of random numbers backed by the counter-based
    Philox generator. Identical ``(seed, stream, chain)`` triples produce
    identical sequences; distinct triples give independent streams.

    A stream must only be used by one worker at a time.

    :param int seed:
        The seed, a non-negative integer. Defaults to 0.

    :param int stream:
        The stream (replication) index. Defaults to 0.

    :param int chain:
        The chain index within a stream. Defaults to 0.
    """
    def __init__(self, seed=0, stream=0, chain=0):
        if seed < 0 or stream < 0 or chain < 0:
            raise InvalidParameter(
                "seed, stream and chain must be non-negative, got ({}, {}, {})".format(seed, stream, chain)
                )
        self._seed = int(seed)
        self._stream = int(stream)
        self._chain = int(chain)
        sequence = np.random.SeedSequence([self._seed, self._stream, self._chain])
        self._generator = np.random.Generator(np.random.Philox(sequence))

    @property
    def seed(self):
        """
        Returns the seed of the stream.
        """
        return self._seed

    @property
    def stream(self):
        """
        Returns the stream index.
        """
        return self._stream

    @property
    def chain(self):
        """
        Returns the chain index.
        """
        return self._chain

    @property
    def generator(self):
        """
        Returns the underlying :class:`numpy.random.Generator`.
        """
        return self._generator

    @property
    def counter(self):
        """
        Returns a copy of the Philox counter, which advances as numbers are
        drawn.
        """
        return np.array(self._generator.bit_generator.state["state"]["counter"])

    def spawn(self, stream=None, chain=None):
        """
        Returns a new, independent stream sharing this stream's seed.

        :param int stream:
            The stream index of the new stream. If `None`, this stream's
            index is reused.

        :param int chain:
            The chain index of the new stream. If `None`, this stream's
            index is reused.
        """
        return RngStream(
            self._seed,
            self._stream if stream is None else stream,
            self._chain if chain is None else chain,
            )

    def standard_normal(self, size=None):
        return self._generator.standard_normal(size)

    def uniform(self, size=None):
        return self._generator.uniform(size=size)

    def __str__(self):
        return "{} (seed {}, stream {}, chain {})".format(
            self.__class__.__name__, self._seed, self._stream, self._chain)

###############################################################################
# MATRICES
###############################################################################

def as_symmetric(m, name="matrix"):
    """
    Validates that ``m`` is a square, symmetric real matrix and returns it as
    an exactly symmetric float array.

    :param m:
        An array-like square matrix.

    :param str name:
        The name used in error messages.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch("{} must be square, got shape {}".format(name, m.shape))
    if m.size:
        scale = max(float(np.max(np.abs(m))), 1.0)
        if not np.allclose(m, m.T, rtol=0.0, atol=1e-8 * scale):
            raise InvalidParameter("{} is not symmetric".format(name))
    return (m + m.T) / 2

class CholeskyFactor:
    """
    A lower-triangular factor ``L`` of a symmetric positive definite matrix
    ``M = L L^T``. Usually created by :func:`cholesky`.

    :param lower:
        The lower-triangular factor.
    """
    def __init__(self, lower):
        lower = np.asarray(lower, dtype=float)
        if lower.ndim != 2 or lower.shape[0] != lower.shape[1]:
            raise DimensionMismatch("a Cholesky factor must be square, got shape {}".format(lower.shape))
        self._lower = lower

    @property
    def lower(self):
        """
        Returns the lower-triangular factor.
        """
        return self._lower

    @property
    def dim(self):
        """
        Returns the dimension of the factored matrix.
        """
        return self._lower.shape[0]

    @property
    def logdet(self):
        """
        Returns the log-determinant of the factored matrix.
        """
        return 2.0 * float(np.sum(np.log(np.diag(self._lower))))

    def reconstruct(self):
        """
        Returns ``L L^T``.
        """
        return self._lower @ self._lower.T

    def solve(self, b):
        """
        Solves ``M x = b`` for ``x``.

        :param b:
            A vector or matrix with ``dim`` rows.
        """
        return linalg.cho_solve((self._lower, True), b)

    def inverse(self):
        """
        Returns ``M^-1`` as an exactly symmetric matrix.
        """
        inverse = self.solve(np.eye(self.dim))
        return (inverse + inverse.T) / 2

    def __str__(self):
        return "{} (dim {})".format(self.__class__.__name__, self.dim)

def cholesky(m):
    """
    Factors a symmetric positive definite matrix.

    A pivot is rejected when it is no larger than ``p * eps * max|diag|``,
    which keeps the test independent of the scale of ``m``.

    :param m:
        A symmetric matrix.

    Raises :exc:`NotPositiveDefinite` when the matrix must be regularized
    first (see :func:`regularize_to_pd`).
    """
    m = as_symmetric(m)
    p = m.shape[0]
    if p == 0:
        return CholeskyFactor(np.zeros((0, 0)))
    threshold = p * np.finfo(float).eps * float(np.max(np.abs(np.diag(m))))
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(
            "matrix of dimension {} is not positive definite".format(p)) from None
    pivots = np.diag(lower) ** 2
    if not np.all(np.isfinite(lower)) or np.any(pivots <= threshold):
        j = int(np.argmin(pivots))
        raise NotPositiveDefinite(
            "matrix of dimension {} is not positive definite (pivot {} is {:.3g})".format(p, j + 1, pivots[j]))
    return CholeskyFactor(lower)

def is_positive_definite(m):
    """
    Returns :data:`True` if :func:`cholesky` succeeds on ``m``.
    """
    try:
        cholesky(m)
    except NotPositiveDefinite:
        return False
    return True

def regularize_to_pd(m, jitter_start=None):
    """
    Adds the smallest ridge ``c I`` with ``c`` in ``{0, jitter_start * 2^k}``
    that makes ``m`` positive definite. Returns the tuple
    ``(regularized matrix, c)``.

    :param m:
        A symmetric matrix.

    :param float jitter_start:
        The first ridge tried after ``c = 0``. If `None`, it is ``1e-8``
        times the mean absolute diagonal (or ``1e-8`` for a zero diagonal).
    """
    m = as_symmetric(m)
    if jitter_start is None:
        mean_diag = float(np.mean(np.abs(np.diag(m)))) if m.size else 0.0
        jitter_start = 1e-8 * mean_diag if mean_diag > 0 else 1e-8
    if not jitter_start > 0:
        raise InvalidParameter("jitter_start must be positive, got {}".format(jitter_start))

    if is_positive_definite(m):
        return m, 0.0

    eye = np.eye(m.shape[0])
    c = float(jitter_start)
    for _ in range(MAX_DOUBLINGS):
        candidate = m + c * eye
        if is_positive_definite(candidate):
            logger.info("regularized a %dx%d matrix with jitter %.3g", m.shape[0], m.shape[0], c)
            return candidate, c
        c *= 2.0

    raise RegularizationFailed(
        "matrix of dimension {} is still not positive definite after {} doublings of the jitter".format(
            m.shape[0], MAX_DOUBLINGS))

###############################################################################
# SAMPLERS
###############################################################################

def sample_mvn(mean, chol, rng, size=None):
    """
    Draws from a multivariate normal distribution, returning
    ``mean + L z`` with ``z`` standard normal.

    :param mean:
        The mean vector.

    :param CholeskyFactor chol:
        A factor of the covariance matrix.

    :param RngStream rng:
        The stream to draw from.

    :param int size:
        If given, returns a ``size x p`` array of independent draws.
    """
    mean = np.asarray(mean, dtype=float)
    if mean.ndim != 1 or mean.shape[0] != chol.dim:
        raise DimensionMismatch(
            "mean has shape {} but the covariance factor has dimension {}".format(mean.shape, chol.dim))
    if size is None:
        return mean + chol.lower @ rng.standard_normal(chol.dim)
    return mean + rng.standard_normal((size, chol.dim)) @ chol.lower.T

def sample_inverse_gamma(shape, rate, rng, size=None):
    """
    Draws from the inverse gamma distribution IG(shape, rate), i.e.
    ``rate / Gamma(shape, 1)``.

    :param float shape:
        The shape, strictly positive.

    :param float rate:
        The rate (scale of the inverse), strictly positive.

    :param RngStream rng:
        The stream to draw from.

    :param int size:
        If given, returns an array of independent draws.
    """
    if not (shape > 0 and rate > 0):
        raise InvalidParameter(
            "inverse gamma needs shape > 0 and rate > 0, got shape={}, rate={}".format(shape, rate))
    return rate / rng.generator.gamma(shape, 1.0, size)

def _exponential_tail(lower, upper, rng):
    # standard normal restricted to (lower, upper) with lower > TRUNCNORM_TAIL
    out = np.empty_like(lower)
    alpha = lower / 2.0 + np.hypot(lower / 2.0, 1.0)
    # all the mass lies within one float spacing of the bound
    collapsed = np.spacing(lower) * alpha >= 1.0
    out[collapsed] = np.nextafter(lower[collapsed], upper[collapsed])
    pending = np.flatnonzero(~collapsed)
    while pending.size:
        lo = lower[pending]
        hi = upper[pending]
        al = alpha[pending]
        narrow = np.isfinite(hi) & (hi - lo < 1.0 / al)
        z = np.where(
            narrow,
            lo + (np.where(narrow, hi, lo) - lo) * rng.uniform(pending.size),
            lo + rng.generator.exponential(1.0 / al),
            )
        log_ratio = np.where(narrow, (lo - z) * (lo + z) / 2.0, -((z - al) ** 2) / 2.0)
        accept = (np.log(rng.uniform(pending.size)) <= log_ratio) & (z > lo) & (z < hi)
        out[pending[accept]] = z[accept]
        pending = pending[~accept]
    return out

def _standard_truncated(a, b, rng):
    # standard normal restricted to (a, b), elementwise; a < b
    out = np.empty_like(a)

    # mirror intervals lying right of zero onto the left so that the
    # inverse CDF is always evaluated where ndtr keeps full precision
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)

    tail = hi < -TRUNCNORM_TAIL
    body = ~tail
    if np.any(body):
        cdf_lo = ndtr(lo[body])
        cdf_hi = ndtr(hi[body])
        out[body] = ndtri(cdf_lo + rng.uniform(int(body.sum())) * (cdf_hi - cdf_lo))
    if np.any(tail):
        out[tail] = -_exponential_tail(-hi[tail], -lo[tail], rng)

    return np.where(flip, -out, out)

def sample_truncated_normal_many(mu, lower, upper, rng):
    """
    Draws independent values from N(mu, 1) truncated to the open intervals
    ``(lower, upper)``, elementwise. Bounds may be infinite.

    Intervals within :data:`TRUNCNORM_TAIL` standard deviations of the mean
    use the inverse CDF; intervals further out use exponential rejection.
    Draws that land on a boundary are redrawn.

    :param mu:
        The means.

    :param lower:
        The lower bounds (may be ``-inf``).

    :param upper:
        The upper bounds (may be ``inf``).

    :param RngStream rng:
        The stream to draw from.
    """
    mu, lower, upper = np.broadcast_arrays(
        np.asarray(mu, dtype=float), np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
    mu = mu.ravel()
    lower = lower.ravel()
    upper = upper.ravel()
    if not np.all(lower < upper):
        j = int(np.flatnonzero(~(lower < upper))[0])
        raise EmptyInterval(
            "empty truncation interval ({}, {}] at position {}".format(lower[j], upper[j], j + 1))

    out = np.empty_like(mu)
    pending = np.arange(mu.size)
    while pending.size:
        draws = mu[pending] + _standard_truncated(
            lower[pending] - mu[pending], upper[pending] - mu[pending], rng)
        inside = np.isfinite(draws) & (draws > lower[pending]) & (draws < upper[pending])
        out[pending[inside]] = draws[inside]
        pending = pending[~inside]
    return out

def sample_truncated_normal(mu, lower, upper, rng):
    """
    Draws one value from N(mu, 1) conditioned to lie strictly inside
    ``(lower, upper)``.

    :param float mu:
        The mean of the untruncated normal.

    :param float lower:
        The lower bound, or ``-inf``.

    :param float upper:
        The upper bound, or ``inf``.

    :param RngStream rng:
        The stream to draw from.
    """
    if not lower < upper:
        raise EmptyInterval("empty truncation interval ({}, {}]".format(lower, upper))
    return float(sample_truncated_normal_many([mu], [lower], [upper], rng)[0])
