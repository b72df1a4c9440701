from enum import Enum
from typing import NamedTuple

import numpy as np
import pandas as pd

from .exceptions import DimensionMismatch, EmptyTrace, IndexOutOfRange, InvalidAlpha

###############################################################################
# FEATURE STATISTICS
###############################################################################

class FeatureStatisticKind(Enum):
    """
    The antisymmetric feature statistic ``W_j = w(beta_j, betak_j)``.
    Swapping a feature with its knockoff negates every kind.
    """
    ABS_DIFF = "abs-diff"
    SQUARED_DIFF = "squared-diff"
    SIGNED_SUM = "signed-sum"

def feature_statistics(beta, betak, kind=FeatureStatisticKind.ABS_DIFF):
    """
    Returns the feature statistics ``W``, elementwise:

    * ``abs-diff``: ``|beta_j| - |betak_j|``
    * ``squared-diff``: ``beta_j^2 - betak_j^2``
    * ``signed-sum``: ``|beta_j + betak_j| sign(|beta_j| - |betak_j|)``

    :param beta:
        Coefficients, a ``p`` vector or a ``T x p`` array of draws.

    :param betak:
        Knockoff coefficients of the same shape.

    :param kind:
        A :class:`FeatureStatisticKind` or its value. Defaults to
        ``abs-diff``.
    """
    beta = np.asarray(beta, dtype=float)
    betak = np.asarray(betak, dtype=float)
    if beta.shape != betak.shape:
        raise DimensionMismatch("beta {} and betak {} differ in shape".format(beta.shape, betak.shape))
    kind = FeatureStatisticKind(kind)
    if kind is FeatureStatisticKind.ABS_DIFF:
        return np.abs(beta) - np.abs(betak)
    if kind is FeatureStatisticKind.SQUARED_DIFF:
        return beta ** 2 - betak ** 2
    return np.abs(beta + betak) * np.sign(np.abs(beta) - np.abs(betak))

###############################################################################
# NULL PROBABILITY BOUNDS
###############################################################################

class NullBounds(NamedTuple):
    """
    Estimated upper bounds ``p_hat`` of the posterior null probabilities,
    the number of exact zeros of ``W`` per feature, and the number of draws
    used.
    """
    p_hat: np.ndarray
    ties: np.ndarray
    samples: int

    @property
    def p(self):
        return self.p_hat.shape[0]

def estimate_null_bounds(w, count_ties=True):
    """
    Estimates the upper bound ``1 - P(W_j > 0 | D) + P(W_j < 0 | D)`` of
    every posterior null probability from a ``T x p`` array of statistic
    draws:

    ``p_hat_j = min(1, (2 #{t : W_j(t) < 0} + #{t : W_j(t) = 0}) / T)``.

    Exact zeros are not negative; they are counted in ``ties``. Without
    ties this is ``(2/T) #{t : W_j(t) < 0}``.

    :param w:
        The statistic draws, one row per retained iteration.

    :param bool count_ties:
        Include the exact zeros in the bound. With :data:`False` the bound
        is always ``(2/T) #{t : W_j(t) < 0}``, which understates the null
        probability when ``W`` has mass at zero (spike-and-slab).
        Defaults to :data:`True`.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if w.ndim != 2:
        raise DimensionMismatch("statistic draws must be a T x p array, got shape {}".format(w.shape))
    if w.shape[0] == 0:
        raise EmptyTrace("no statistic draws to estimate null bounds from")
    t = w.shape[0]
    ties = (w == 0).sum(axis=0)
    negative = 2 * (w < 0).sum(axis=0) + (ties if count_ties else 0)
    return NullBounds(p_hat=np.minimum(1.0, negative / t), ties=ties, samples=t)

def _p_hat(bounds):
    return bounds.p_hat if isinstance(bounds, NullBounds) else np.asarray(bounds, dtype=float)

def bfdr(subset, bounds):
    """
    Returns the Bayesian false discovery rate of a feature set, the mean of
    ``p_hat`` over the set, or 0 for the empty set.

    :param subset:
        Feature indices (0-based).

    :param bounds:
        A :class:`NullBounds` or a vector of ``p_hat``.
    """
    p_hat = _p_hat(bounds)
    subset = np.asarray(list(subset), dtype=int)
    if subset.size == 0:
        return 0.0
    bad = (subset < 0) | (subset >= p_hat.shape[0])
    if bad.any():
        raise IndexOutOfRange("feature index {} out of range for p={}".format(
            int(subset[bad][0]), p_hat.shape[0]))
    return float(p_hat[subset].mean())

###############################################################################
# GREEDY SELECTION
###############################################################################

class SelectionResult:
    """
    The result of :func:`greedy_select`.

    :param order:
        Feature indices sorted by ascending ``p_hat`` (ties by index).

    :param prefix_bfdr:
        ``BFDR`` of the first ``j`` features of ``order``, for every ``j``.

    :param int k:
        The number of selected features.

    :param float alpha:
        The target level.

    :param p_hat:
        The null probability bounds, in feature order.
    """
    def __init__(self, order, prefix_bfdr, k, alpha, p_hat):
        self._order = np.asarray(order, dtype=int)
        self._prefix_bfdr = np.asarray(prefix_bfdr, dtype=float)
        self._k = int(k)
        self._alpha = alpha
        self._p_hat = np.asarray(p_hat, dtype=float)

    @property
    def order(self):
        return self._order

    @property
    def prefix_bfdr(self):
        return self._prefix_bfdr

    @property
    def k(self):
        return self._k

    @property
    def alpha(self):
        return self._alpha

    @property
    def p_hat(self):
        return self._p_hat

    @property
    def selected(self):
        """
        Returns the selected feature indices, sorted ascending.
        """
        return np.sort(self._order[:self._k])

    @property
    def bfdr(self):
        """
        Returns the BFDR of the selected set (0 when nothing is selected).
        """
        return float(self._prefix_bfdr[self._k - 1]) if self._k else 0.0

    def to_frame(self, names=None):
        """
        Returns one row per feature in rank order with columns
        ``feature, p_hat, rank, prefix_bfdr, selected``.

        :param names:
            Feature names. Defaults to 1-based positions.
        """
        p = self._order.shape[0]
        if names is None:
            names = [str(j + 1) for j in range(p)]
        if len(names) != p:
            raise DimensionMismatch("{} names for {} features".format(len(names), p))
        return pd.DataFrame({
            "feature": [names[j] for j in self._order],
            "p_hat": self._p_hat[self._order],
            "rank": np.arange(1, p + 1),
            "prefix_bfdr": self._prefix_bfdr,
            "selected": np.arange(p) < self._k,
            })

    def __str__(self):
        return "SelectionResult ({} of {} features at alpha={})".format(self._k, self._order.shape[0], self._alpha)

def greedy_select(bounds, alpha):
    """
    Selects the largest set whose Bayesian FDR is at most ``alpha``: sort
    ``p_hat`` ascending, and keep the longest prefix whose mean ``p_hat``
    is at most ``alpha``.

    :param bounds:
        A :class:`NullBounds` or a vector of ``p_hat``.

    :param float alpha:
        The target level, in (0, 1).
    """
    if not 0 < alpha < 1:
        raise InvalidAlpha("alpha must be in (0, 1), got {}".format(alpha))
    p_hat = _p_hat(bounds)
    order = np.argsort(p_hat, kind="stable")
    prefix = np.cumsum(p_hat[order]) / np.arange(1, p_hat.shape[0] + 1)
    # prefix means are non-decreasing, so the passing prefixes are leading
    passing = np.flatnonzero(prefix <= alpha)
    k = int(passing[-1]) + 1 if passing.size else 0
    return SelectionResult(order, prefix, k, alpha, p_hat)

def select_from_trace(trace, kind=FeatureStatisticKind.ABS_DIFF, alpha=0.1, count_ties=True):
    """
    Runs the selection pipeline on a trace: feature statistics, null
    bounds, then greedy selection.

    :param Trace trace:
        A trace with ``beta`` and ``betak`` draws.

    :param kind:
        The feature statistic. Defaults to ``abs-diff``.

    :param float alpha:
        The target level. Defaults to 0.1.

    :param bool count_ties:
        Passed to :func:`estimate_null_bounds`.
    """
    return greedy_select(estimate_null_bounds(feature_statistics(trace.beta, trace.betak, kind), count_ties), alpha)
