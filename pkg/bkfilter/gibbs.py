import logging
import time
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import DimensionMismatch, EmptyTrace, InvalidParameter, ParseError
from .gaussian import RngStream, cholesky
from .knockoff import delta_statistic, sample_knockoffs_marginal

logger = logging.getLogger(__name__)

###############################################################################
# CONFIGURATION
###############################################################################

class KnockoffUpdate(Enum):
    """
    How a sweep redraws the knockoff rows.

    ``MARGINAL`` draws every row afresh from ``f(x~ | x)``, so each kept
    draw is a valid knockoff copy. ``CONDITIONAL`` draws from the full
    conditional given the coefficients and the response; the likelihood
    then pulls the rows toward the residual, and the knockoff
    coefficients can trade off against the noise variance.
    """
    MARGINAL = "marginal"
    CONDITIONAL = "conditional"

@dataclass(frozen=True)
class ChainConfig:
    """
    Settings for one Gibbs chain.

    :param int burn_in:
        Sweeps discarded before draws are kept. Defaults to 500.

    :param int samples:
        Number of draws kept (T). Defaults to 2000.

    :param int thin:
        Keep one draw every ``thin`` sweeps after burn-in. Defaults to 1.

    :param int seed:
        The chain seed. Defaults to 0.

    :param int chain:
        The chain index, giving an independent stream for the same seed.

    :param bool record_delta:
        Record the knockoff validity statistic for every kept draw.

    :param int snapshot_every:
        Keep a copy of the knockoff rows (and probit latents) every
        ``snapshot_every`` kept draws. 0 (the default) keeps none.

    :param bool random_scan:
        Visit spike-and-slab coordinates in a random order each sweep
        instead of ascending order.

    :param float ridge:
        Ridge added to the probit Gram matrix. 0 (the default) refuses
        singular designs instead.

    :param KnockoffUpdate knockoff_update:
        How the knockoff rows are redrawn each sweep. Defaults to
        :attr:`KnockoffUpdate.MARGINAL`.
    """
    burn_in: int = 500
    samples: int = 2000
    thin: int = 1
    seed: int = 0
    chain: int = 0
    record_delta: bool = True
    snapshot_every: int = 0
    random_scan: bool = False
    ridge: float = 0.0
    knockoff_update: KnockoffUpdate = KnockoffUpdate.MARGINAL

    def __post_init__(self):
        for name, minimum in (("burn_in", 0), ("samples", 1), ("thin", 1), ("seed", 0),
                              ("chain", 0), ("snapshot_every", 0)):
            value = getattr(self, name)
            if int(value) != value or value < minimum:
                raise InvalidParameter("{} must be an integer >= {}, got {}".format(name, minimum, value))
        if not self.ridge >= 0:
            raise InvalidParameter("ridge must be >= 0, got {}".format(self.ridge))
        try:
            object.__setattr__(self, "knockoff_update", KnockoffUpdate(self.knockoff_update))
        except ValueError:
            raise InvalidParameter("knockoff_update must be marginal or conditional, got {!r}".format(
                self.knockoff_update)) from None

    @property
    def total_sweeps(self):
        return self.burn_in + self.samples * self.thin

    def as_dict(self):
        return {f.name: _plain(getattr(self, f.name)) for f in fields(self)}

    def rng(self):
        """
        Returns a fresh :class:`RngStream` for this chain.
        """
        return RngStream(self.seed, stream=0, chain=self.chain)

def _plain(value):
    return value.value if isinstance(value, Enum) else value

###############################################################################
# TRACES
###############################################################################

class Trace:
    """
    The draws kept by a Gibbs chain: coefficients ``beta`` and knockoff
    coefficients ``betak`` (both ``T x p``), the sweep number of each draw,
    and optionally the validity statistic and knockoff snapshots.
    """
    def __init__(self, beta, betak, iterations=None, delta=None, burn_in=0, seed=None, snapshots=None):
        beta = np.atleast_2d(np.asarray(beta, dtype=float))
        betak = np.atleast_2d(np.asarray(betak, dtype=float))
        if beta.shape != betak.shape:
            raise DimensionMismatch("beta {} and betak {} differ in shape".format(beta.shape, betak.shape))
        if beta.shape[0] == 0:
            raise EmptyTrace("a trace needs at least one draw")
        self._beta = beta
        self._betak = betak
        self._iterations = (np.arange(1, beta.shape[0] + 1) if iterations is None
                            else np.asarray(iterations, dtype=int))
        self._delta = None if delta is None else np.asarray(delta, dtype=float)
        self._burn_in = burn_in
        self._seed = seed
        self._snapshots = list(snapshots or [])

    @property
    def beta(self):
        return self._beta

    @property
    def betak(self):
        return self._betak

    @property
    def iterations(self):
        """
        Returns the sweep number of every kept draw.
        """
        return self._iterations

    @property
    def delta(self):
        """
        Returns the validity statistic of every kept draw, or `None`.
        """
        return self._delta

    @property
    def burn_in(self):
        return self._burn_in

    @property
    def seed(self):
        return self._seed

    @property
    def snapshots(self):
        """
        Returns a list of ``(sweep, knockoff rows)`` pairs.
        """
        return self._snapshots

    @property
    def samples(self):
        return self._beta.shape[0]

    @property
    def p(self):
        return self._beta.shape[1]

    def posterior_summary(self):
        """
        Returns a :class:`pandas.DataFrame` with the posterior mean and
        standard deviation of every ``beta_j`` and ``betak_j``.
        """
        ddof = 1 if self.samples > 1 else 0
        return pd.DataFrame({
            "beta_mean": self._beta.mean(axis=0),
            "beta_sd": self._beta.std(axis=0, ddof=ddof),
            "betak_mean": self._betak.mean(axis=0),
            "betak_sd": self._betak.std(axis=0, ddof=ddof),
            })

    def _extra_columns(self):
        return {}

    def to_frame(self):
        """
        Returns the trace as a :class:`pandas.DataFrame` with columns
        ``iter, beta_1..beta_p, betak_1..betak_p`` followed by model
        specific columns and ``delta``.
        """
        columns = {"iter": self._iterations}
        for j in range(self.p):
            columns["beta_{}".format(j + 1)] = self._beta[:, j]
        for j in range(self.p):
            columns["betak_{}".format(j + 1)] = self._betak[:, j]
        columns.update(self._extra_columns())
        if self._delta is not None:
            columns["delta"] = self._delta
        return pd.DataFrame(columns)

    def to_csv(self, path):
        """
        Writes the trace to a CSV file.
        """
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    def __str__(self):
        return "{} (T={}, p={})".format(self.__class__.__name__, self.samples, self.p)

class LinearTrace(Trace):
    """
    A trace of the Gaussian linear sampler; adds the noise variance draws.
    """
    def __init__(self, beta, betak, sigma2, **kwargs):
        super().__init__(beta, betak, **kwargs)
        self._sigma2 = np.asarray(sigma2, dtype=float)

    @property
    def sigma2(self):
        return self._sigma2

    def _extra_columns(self):
        return {"sigma2": self._sigma2}

class ProbitTrace(Trace):
    """
    A trace of the probit sampler. ``latents`` holds ``(sweep, u)`` pairs
    captured at the snapshot interval.
    """
    def __init__(self, beta, betak, latents=None, **kwargs):
        super().__init__(beta, betak, **kwargs)
        self._latents = list(latents or [])

    @property
    def latents(self):
        return self._latents

    def latents_frame(self):
        """
        Returns the latent snapshots as a :class:`pandas.DataFrame` with
        columns ``iter, u_1..u_n``.
        """
        if not self._latents:
            return pd.DataFrame({"iter": []})
        n = self._latents[0][1].shape[0]
        rows = np.vstack([u for _, u in self._latents])
        frame = pd.DataFrame(rows, columns=["u_{}".format(i + 1) for i in range(n)])
        frame.insert(0, "iter", [it for it, _ in self._latents])
        return frame

def read_trace(path):
    """
    Reads a trace written by :meth:`Trace.to_csv`. Returns a
    :class:`LinearTrace` when a ``sigma2`` column is present, otherwise a
    :class:`ProbitTrace`.

    :param path:
        The trace CSV file.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError("trace file not found: {}".format(path))
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError("{}: {}".format(path, e)) from None

    beta_cols = [c for c in frame.columns if c.startswith("beta_")]
    betak_cols = [c for c in frame.columns if c.startswith("betak_")]
    expected = ["beta_{}".format(j + 1) for j in range(len(beta_cols))]
    if not beta_cols or beta_cols != expected or betak_cols != ["betak_{}".format(j + 1) for j in range(len(beta_cols))]:
        raise ParseError("{}: expected columns beta_1..beta_p and betak_1..betak_p".format(path))
    if "iter" not in frame.columns:
        raise ParseError("{}: missing column 'iter'".format(path))
    if frame.shape[0] == 0:
        raise EmptyTrace("{}: the trace has no draws".format(path))
    for column in frame.columns:
        values = pd.to_numeric(frame[column], errors="coerce")
        if values.isna().any():
            row = int(np.flatnonzero(values.isna().to_numpy())[0])
            raise ParseError("{}: row {}, column '{}': not a number".format(path, row + 2, column))

    kwargs = dict(
        iterations=frame["iter"].to_numpy(dtype=int),
        delta=frame["delta"].to_numpy(dtype=float) if "delta" in frame.columns else None,
        )
    beta = frame[beta_cols].to_numpy(dtype=float)
    betak = frame[betak_cols].to_numpy(dtype=float)
    if "sigma2" in frame.columns:
        return LinearTrace(beta, betak, frame["sigma2"].to_numpy(dtype=float), **kwargs)
    return ProbitTrace(beta, betak, **kwargs)

###############################################################################
# KNOCKOFF ROWS
###############################################################################

def knockoff_conditional_moments(model, x, response, beta, betak, sigma2):
    """
    Returns ``(means, covariance)`` of the full conditional of every
    knockoff row given the coefficients:

    ``Sigma~ = (A + betak betak^T / sigma2)^-1`` and
    ``mu~_i = Sigma~ [(diag(s)^-1 - A - betak beta^T / sigma2) x_i + betak y_i / sigma2]``.

    :param KnockoffJointModel model:
        The joint knockoff model.

    :param x:
        The ``n x p`` centered feature rows.

    :param response:
        The response (or probit latents), length ``n``.

    :param beta:
        The feature coefficients.

    :param betak:
        The knockoff coefficients.

    :param float sigma2:
        The noise variance (1 for the probit model).
    """
    precision = model.a + np.outer(betak, betak) / sigma2
    covariance = cholesky(precision).inverse()
    b = np.diag(model.s_inverse) - model.a - np.outer(betak, beta) / sigma2
    means = (x @ b.T + np.outer(response, betak) / sigma2) @ covariance
    return means, covariance

def knockoff_conditional_draw(model, x, response, beta, betak, sigma2, rng):
    """
    Redraws every knockoff row from its full conditional. The covariance
    does not depend on the row, so it is factored once per call.
    """
    means, covariance = knockoff_conditional_moments(model, x, response, beta, betak, sigma2)
    return means + rng.standard_normal(means.shape) @ cholesky(covariance).lower.T

###############################################################################
# SAMPLER BASE CLASS
###############################################################################

class GibbsSampler:
    """
    Base class for the knockoff data-augmentation Gibbs samplers.

    The knockoff rows are initialized from ``f(x~ | x)``. Every sweep
    redraws the coefficients, the model's nuisance variables and then the
    knockoff rows, either afresh from ``f(x~ | x)`` or from their full
    conditional (see :class:`KnockoffUpdate`).

    :param Dataset data:
        The dataset, with features transformed as the model was fit.

    :param KnockoffJointModel model:
        The joint knockoff model.

    :param ChainConfig config:
        The chain settings. Defaults to :class:`ChainConfig` defaults.
    """
    def __init__(self, data, model, config=None):
        if data.p != model.p:
            raise DimensionMismatch("dataset has {} features but the model has {}".format(data.p, model.p))
        self._model = model
        self._config = config if config is not None else ChainConfig()
        self._data = self._center(data)
        self._rng = self._config.rng()
        self._check()
        self.state = self._initial_state(sample_knockoffs_marginal(model, self._data.x, self._rng))

    @property
    def config(self):
        return self._config

    @property
    def model(self):
        return self._model

    @property
    def data(self):
        """
        Returns the dataset as the sampler sees it (centered features).
        """
        return self._data

    def _center(self, data):
        return data.with_design(data.x - self._model.mean)

    def _check(self):
        pass

    def _initial_state(self, xk):
        raise NotImplementedError

    def _conditional_knockoffs(self):
        raise NotImplementedError

    def update_knockoffs(self):
        """
        Redraws the knockoff rows as :attr:`ChainConfig.knockoff_update`
        asks and returns them.
        """
        if self._config.knockoff_update is KnockoffUpdate.CONDITIONAL:
            return self._conditional_knockoffs()
        self.state.xk = sample_knockoffs_marginal(self._model, self._data.x, self._rng)
        return self.state.xk

    def sweep(self):
        """
        Performs one full Gibbs sweep, updating :attr:`state` in place.
        """
        raise NotImplementedError

    def _extra_draws(self):
        return {}

    def _snapshot_extras(self):
        return {}

    def _make_trace(self, draws, common):
        raise NotImplementedError

    def _finish(self, trace):
        pass

    def run(self):
        """
        Runs the chain and returns its trace.
        """
        config = self._config
        started = time.perf_counter()
        logger.info("%s: n=%d, p=%d, burn-in %d, %d draws (thin %d), seed %d, %s knockoff rows",
                    self.__class__.__name__, self._data.n, self._data.p,
                    config.burn_in, config.samples, config.thin, config.seed, config.knockoff_update.value)

        beta, betak, iterations, delta, snapshots = [], [], [], [], []
        extra = {}
        extras_snapshots = {}
        for sweep in range(1, config.total_sweeps + 1):
            self.sweep()
            self.state.iteration = sweep
            kept = sweep - config.burn_in
            if kept <= 0 or kept % config.thin:
                continue
            beta.append(self.state.beta.copy())
            betak.append(self.state.betak.copy())
            iterations.append(sweep)
            for name, value in self._extra_draws().items():
                extra.setdefault(name, []).append(value)
            if config.record_delta:
                delta.append(delta_statistic(self._data.x, self.state.xk))
            if config.snapshot_every and (kept // config.thin) % config.snapshot_every == 0:
                snapshots.append((sweep, self.state.xk.copy()))
                for name, value in self._snapshot_extras().items():
                    extras_snapshots.setdefault(name, []).append((sweep, value))

        common = dict(
            iterations=np.array(iterations),
            delta=np.array(delta) if config.record_delta else None,
            burn_in=config.burn_in,
            seed=config.seed,
            snapshots=snapshots,
            )
        trace = self._make_trace(
            dict(beta=np.array(beta), betak=np.array(betak), **extra, **extras_snapshots), common)
        self._finish(trace)
        logger.info("%s finished %d sweeps in %.2fs", self.__class__.__name__,
                    config.total_sweeps, time.perf_counter() - started)
        return trace
