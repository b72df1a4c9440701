import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from tqdm import tqdm

from .dataset import Dataset, ResponseKind
from .exceptions import BKFError, IndexOutOfRange, InvalidSpec, ParseError
from .gaussian import RngStream, cholesky, sample_mvn, stable_seed
from .gibbs import ChainConfig, KnockoffUpdate
from .gibbs_linear import make_prior, run_chain_linear
from .gibbs_probit import run_chain_probit
from .knockoff import DEFAULT_SLACK, fit_joint_model, true_model
from .selection import FeatureStatisticKind, select_from_trace

logger = logging.getLogger(__name__)

FULL_REPLICATIONS = 100

###############################################################################
# DESIGNS
###############################################################################

class CovarianceCase(Enum):
    """
    The feature covariance of a synthetic design: the identity,
    ``rho^|i-j|`` (autocorrelated) or ``rho`` off the diagonal
    (equicorrelated).
    """
    INDEPENDENT = "independent"
    AUTOCORR = "autocorr"
    EQUICORR = "equicorr"

class BetaLaw(Enum):
    """
    How the non-null coefficients are drawn: ``Unif[-a, a]`` or ``+-a``
    with a random sign.
    """
    UNIFORM = "uniform"
    FIXED = "fixed"

_INT_FIELDS = ("n", "p", "v", "burn_in", "samples", "thin", "replications", "seed")
_FLOAT_FIELDS = ("a", "sigma2", "rho", "xi", "tau2", "alpha", "slack", "ridge")
_ENUM_FIELDS = {
    "case": CovarianceCase,
    "response": ResponseKind,
    "statistic": FeatureStatisticKind,
    "beta_law": BetaLaw,
    "knockoff_update": KnockoffUpdate,
    }

@dataclass(frozen=True)
class ExperimentSpec:
    """
    One synthetic design and the analysis run on it. Every field can be set
    from a YAML experiment file under the same name.
    """
    n: int = 500
    p: int = 30
    a: float = 2.0
    sigma2: float = 4.0
    rho: float = 0.0
    case: CovarianceCase = CovarianceCase.INDEPENDENT
    v: int = 10
    response: ResponseKind = ResponseKind.LINEAR
    prior: str = "flat"
    xi: float = 0.1
    tau2: float = 1.0
    alpha: float = 0.1
    burn_in: int = 500
    samples: int = 2000
    thin: int = 1
    replications: int = 50
    seed: int = 0
    statistic: FeatureStatisticKind = FeatureStatisticKind.ABS_DIFF
    use_true_sigma: bool = True
    slack: float = DEFAULT_SLACK
    beta_law: BetaLaw = BetaLaw.UNIFORM
    ridge: float = 0.0
    knockoff_update: KnockoffUpdate = KnockoffUpdate.MARGINAL

    def __post_init__(self):
        for name in _INT_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.integer)) or int(value) != value:
                raise InvalidSpec("'{}' must be an integer, got {!r}".format(name, value))
            object.__setattr__(self, name, int(value))
        for name in _FLOAT_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.number)):
                raise InvalidSpec("'{}' must be a number, got {!r}".format(name, value))
            object.__setattr__(self, name, float(value))
        for name, enum in _ENUM_FIELDS.items():
            try:
                object.__setattr__(self, name, enum(getattr(self, name)))
            except ValueError:
                raise InvalidSpec("'{}' must be one of {}, got {!r}".format(
                    name, ", ".join(e.value for e in enum), getattr(self, name))) from None
        if not isinstance(self.use_true_sigma, bool):
            raise InvalidSpec("'use_true_sigma' must be true or false, got {!r}".format(self.use_true_sigma))

        checks = (
            (self.n >= 1, "'n' must be >= 1"),
            (self.p >= 1, "'p' must be >= 1"),
            (0 <= self.v <= self.p, "'v' must be between 0 and p ({})".format(self.p)),
            (self.a >= 0, "'a' must be >= 0"),
            (self.sigma2 > 0, "'sigma2' must be > 0"),
            (0 <= self.rho < 1, "'rho' must be in [0, 1)"),
            (0 < self.alpha < 1, "'alpha' must be in (0, 1)"),
            (self.samples >= 1 and self.thin >= 1 and self.burn_in >= 0, "chain lengths must be positive"),
            (self.replications >= 1, "'replications' must be >= 1"),
            (self.seed >= 0, "'seed' must be >= 0"),
            (0 < self.slack <= 1, "'slack' must be in (0, 1]"),
            (self.ridge >= 0, "'ridge' must be >= 0"),
            (self.prior in ("flat", "spike-slab"), "'prior' must be flat or spike-slab"),
            (self.response is ResponseKind.LINEAR or self.prior == "flat",
             "the probit response only supports the flat prior"),
            )
        for ok, message in checks:
            if not ok:
                raise InvalidSpec(message)
        try:
            self.make_prior()
        except BKFError as e:
            raise InvalidSpec(str(e)) from None

    def make_prior(self):
        return make_prior(self.prior, self.xi, self.tau2)

    def chain_config(self, seed):
        return ChainConfig(burn_in=self.burn_in, samples=self.samples, thin=self.thin,
                           seed=seed, record_delta=False, ridge=self.ridge,
                           knockoff_update=self.knockoff_update)

    def as_dict(self):
        """
        Returns the fields as plain YAML/JSON friendly values.
        """
        return {f.name: _plain(getattr(self, f.name)) for f in fields(self)}

def _plain(value):
    return value.value if isinstance(value, Enum) else value

SPEC_KEYS = tuple(f.name for f in fields(ExperimentSpec))

def _a_grid():
    return [round(0.2 * k, 1) for k in range(1, 21)]

PRESETS = {
    "strength-grid": {
        "p": 30, "v": 10, "sigma2": 4.0, "case": "independent",
        "grid": {"n": [100, 200, 500, 1000], "a": _a_grid()},
        },
    "autocorr-grid": {
        "p": 30, "v": 10, "a": 4.0, "sigma2": 4.0, "case": "autocorr",
        "grid": {"n": [100, 200, 500, 1000], "rho": [round(0.1 * k, 1) for k in range(10)]},
        },
    "equicorr-grid": {
        "p": 30, "v": 10, "a": 4.0, "sigma2": 4.0, "case": "equicorr",
        "grid": {"n": [100, 200, 500, 1000], "rho": [round(0.1 * k, 1) for k in range(10)]},
        },
    "sparse-grid": {
        "n": 200, "a": 4.0, "sigma2": 4.0, "case": "autocorr", "rho": 0.6,
        "prior": "spike-slab", "xi": 0.1, "tau2": 1.0,
        "grid": {"p": [100, 200, 500, 1000], "v": list(range(1, 31))},
        },
    "probit-planted": {
        "n": 1000, "p": 10, "v": 1, "a": 2.0, "sigma2": 1.0,
        "response": "probit", "beta_law": "fixed",
        },
    }

class ExperimentGrid:
    """
    A base :class:`ExperimentSpec` and the axes it is varied along. Every
    combination of axis values is one grid point.

    :param ExperimentSpec base:
        The design shared by every point.

    :param dict axes:
        Maps spec field names to lists of values, in axis order.
    """
    def __init__(self, base, axes=None):
        self._base = base
        self._axes = {name: list(values) for name, values in (axes or {}).items()}
        for name, values in self._axes.items():
            if name not in SPEC_KEYS or name in ("seed", "replications"):
                raise InvalidSpec("cannot vary '{}' in a grid".format(name))
            if not values:
                raise InvalidSpec("grid axis '{}' has no values".format(name))
        # validate every point up front
        self._points = [(coords, self._spec_at(coords)) for coords in self._coordinates()]

    def _coordinates(self):
        names = list(self._axes)
        for values in itertools.product(*(self._axes[name] for name in names)):
            yield dict(zip(names, values))

    def _spec_at(self, coords):
        try:
            return replace(self._base, **coords)
        except InvalidSpec as e:
            raise InvalidSpec("grid point {}: {}".format(coords, e)) from None

    @property
    def base(self):
        return self._base

    @property
    def axes(self):
        return self._axes

    @property
    def points(self):
        """
        Returns a list of ``(coordinates, spec)`` pairs in grid order.
        """
        return self._points

    def with_base(self, **changes):
        """
        Returns a grid with the same axes and some base fields changed.
        """
        return ExperimentGrid(replace(self._base, **changes), self._axes)

    def __len__(self):
        return len(self._points)

def grid_from_mapping(mapping, preset=None):
    """
    Builds an :class:`ExperimentGrid` from a flat mapping of spec fields,
    an optional ``grid`` mapping of axes and an optional ``preset`` name.
    Keys given explicitly override the preset and remove any preset axis of
    the same name.

    :param dict mapping:
        The parsed experiment file.

    :param str preset:
        A key of :data:`PRESETS`, used when the mapping names none.
    """
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise InvalidSpec("an experiment spec must be a mapping of keys to values")
    mapping = dict(mapping)
    preset = mapping.pop("preset", preset)
    user_grid = mapping.pop("grid", None) or {}
    if not isinstance(user_grid, dict):
        raise InvalidSpec("'grid' must map spec keys to lists of values")
    for key in list(mapping) + list(user_grid):
        if key not in SPEC_KEYS:
            raise InvalidSpec("unknown key '{}'".format(key))

    values, axes = {}, {}
    if preset is not None:
        if preset not in PRESETS:
            raise InvalidSpec("unknown preset '{}' (known: {})".format(preset, ", ".join(sorted(PRESETS))))
        values.update({k: v for k, v in PRESETS[preset].items() if k != "grid"})
        axes.update(PRESETS[preset].get("grid", {}))
    values.update(mapping)
    for key in mapping:
        axes.pop(key, None)
    for key, axis in user_grid.items():
        if not isinstance(axis, list):
            raise InvalidSpec("grid axis '{}' must be a list".format(key))
        axes[key] = axis
    # the base is the first grid point
    values.update({key: axis[0] for key, axis in axes.items() if axis})

    try:
        base = ExperimentSpec(**values)
    except TypeError as e:
        raise InvalidSpec(str(e)) from None
    return ExperimentGrid(base, axes)

def load_spec(path, preset=None):
    """
    Reads an experiment file (flat YAML) and returns its
    :class:`ExperimentGrid`.

    :param path:
        The experiment file.

    :param str preset:
        A preset applied when the file names none.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError("experiment spec not found: {}".format(path))
    try:
        mapping = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ParseError("{}: {}".format(path, e)) from None
    try:
        return grid_from_mapping(mapping, preset)
    except InvalidSpec as e:
        raise InvalidSpec("{}: {}".format(path, e)) from None

###############################################################################
# DATA GENERATION
###############################################################################

def covariance_matrix(case, rho, p):
    """
    Returns the ``p x p`` feature correlation matrix of a design.

    :param case:
        A :class:`CovarianceCase` or its value.

    :param float rho:
        The correlation, in [0, 1).

    :param int p:
        The number of features.
    """
    case = CovarianceCase(case)
    if case is CovarianceCase.INDEPENDENT or rho == 0:
        return np.eye(p)
    if case is CovarianceCase.AUTOCORR:
        lags = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
        return rho ** lags
    sigma = np.full((p, p), float(rho))
    np.fill_diagonal(sigma, 1.0)
    return sigma

def generate_dataset(spec, rng):
    """
    Simulates one dataset of a design. Returns ``(dataset, beta, h1)``
    where ``h1`` holds the sorted indices of the non-null features.
    A probit design thresholds a latent with unit noise variance and
    ignores ``sigma2``.

    :param ExperimentSpec spec:
        The design.

    :param RngStream rng:
        The stream to draw from.
    """
    sigma = covariance_matrix(spec.case, spec.rho, spec.p)
    x = sample_mvn(np.zeros(spec.p), cholesky(sigma), rng, size=spec.n)
    h1 = np.sort(rng.generator.choice(spec.p, size=spec.v, replace=False))
    beta = np.zeros(spec.p)
    if spec.beta_law is BetaLaw.UNIFORM:
        beta[h1] = rng.generator.uniform(-spec.a, spec.a, size=spec.v)
    else:
        beta[h1] = spec.a * rng.generator.choice([-1.0, 1.0], size=spec.v)
    if spec.response is ResponseKind.PROBIT:
        y = (x @ beta + rng.standard_normal(spec.n) > 0).astype(float)
    else:
        y = x @ beta + np.sqrt(spec.sigma2) * rng.standard_normal(spec.n)
    return Dataset(x, y, kind=spec.response), beta, h1

def score(selected, h1, p):
    """
    Returns ``(fdp, power)`` of a selection:
    ``|S & H0| / max(|S|, 1)`` and ``|S & H1| / |H1|`` (0 when ``H1`` is
    empty).

    :param selected:
        The selected feature indices.

    :param h1:
        The non-null feature indices.

    :param int p:
        The number of features.
    """
    selected = set(int(j) for j in selected)
    h1 = set(int(j) for j in h1)
    for j in selected | h1:
        if not 0 <= j < p:
            raise IndexOutOfRange("feature index {} out of range for p={}".format(j, p))
    true_positives = len(selected & h1)
    fdp = (len(selected) - true_positives) / max(len(selected), 1)
    power = true_positives / len(h1) if h1 else 0.0
    return fdp, power

###############################################################################
# REPLICATIONS
###############################################################################

@dataclass(frozen=True)
class ReplicationResult:
    rep: int
    seed: int
    h1: tuple
    selected: tuple
    fdp: float
    power: float
    runtime_s: float
    error: str = ""

    @property
    def ok(self):
        return not self.error

    def as_row(self, timings=False):
        row = {
            "rep": self.rep,
            "seed": self.seed,
            "fdp": self.fdp,
            "power": self.power,
            "n_selected": len(self.selected),
            "selected": " ".join(str(j + 1) for j in self.selected),
            "h1": " ".join(str(j + 1) for j in self.h1),
            "error": self.error,
            }
        if timings:
            row["runtime_s"] = self.runtime_s
        return row

def run_replication(spec, rep):
    """
    Runs replication ``rep`` of a design: generate, build the knockoff
    model, run the chain, select and score. Errors raised by the package
    are recorded in the result instead of propagating.
    """
    seed = stable_seed(spec.seed, rep)
    started = time.perf_counter()
    h1 = ()
    try:
        data, _, h1 = generate_dataset(spec, RngStream(seed, stream=1))
        h1 = tuple(int(j) for j in h1)
        if spec.use_true_sigma:
            model = true_model(covariance_matrix(spec.case, spec.rho, spec.p), spec.slack)
        else:
            model, moments = fit_joint_model(data.x, standardize=True, slack=spec.slack)
            data = data.with_design(moments.transform(data.x))
        config = spec.chain_config(seed)
        if spec.response is ResponseKind.PROBIT:
            trace = run_chain_probit(data, model, config)
        else:
            trace = run_chain_linear(data, model, spec.make_prior(), config)
        selected = tuple(int(j) for j in select_from_trace(trace, spec.statistic, spec.alpha).selected)
    except BKFError as e:
        logger.warning("replication %d (seed %d) failed: %s", rep, seed, e)
        return ReplicationResult(rep, seed, h1, (), float("nan"), float("nan"),
                                 time.perf_counter() - started, "{}: {}".format(type(e).__name__, e))
    fdp, power = score(selected, h1, spec.p)
    return ReplicationResult(rep, seed, h1, selected, fdp, power, time.perf_counter() - started)

def _run_task(task):
    return run_replication(*task)

def _execute(tasks, jobs=1, progress=False):
    bar = tqdm(total=len(tasks), desc="replications", unit="rep", disable=not progress)
    try:
        if jobs <= 1:
            results = []
            for task in tasks:
                results.append(_run_task(task))
                bar.update()
            return results
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = []
            for result in pool.map(_run_task, tasks, chunksize=1):
                results.append(result)
                bar.update()
            return results
    finally:
        bar.close()

###############################################################################
# RESULTS
###############################################################################

class ExperimentResult:
    """
    The replications of one grid point and their aggregate.

    :param ExperimentSpec spec:
        The design.

    :param list replications:
        :class:`ReplicationResult` objects in replication order.

    :param dict coordinates:
        The grid coordinates of the point. Defaults to none.
    """
    def __init__(self, spec, replications, coordinates=None):
        self._spec = spec
        self._replications = list(replications)
        self._coordinates = dict(coordinates or {})

    @property
    def spec(self):
        return self._spec

    @property
    def replications(self):
        return self._replications

    @property
    def coordinates(self):
        return self._coordinates

    @property
    def failed(self):
        return sum(not r.ok for r in self._replications)

    def aggregate(self):
        """
        Returns a dict with ``mean_fdr``, ``mean_power``, ``sd_power``,
        ``R`` (successful replications) and ``failed``.
        """
        ok = [r for r in self._replications if r.ok]
        fdp = np.array([r.fdp for r in ok])
        power = np.array([r.power for r in ok])
        return {
            "mean_fdr": float(fdp.mean()) if ok else float("nan"),
            "mean_power": float(power.mean()) if ok else float("nan"),
            "sd_power": float(power.std(ddof=1)) if len(ok) > 1 else 0.0,
            "R": len(ok),
            "failed": len(self._replications) - len(ok),
            }

    def replications_frame(self, timings=False):
        return pd.DataFrame([r.as_row(timings) for r in self._replications])

    def __str__(self):
        agg = self.aggregate()
        return "ExperimentResult ({}: FDR {:.3f}, power {:.3f}, R={})".format(
            self._coordinates or "single point", agg["mean_fdr"], agg["mean_power"], agg["R"])

class GridResult:
    """
    The results of every point of an :class:`ExperimentGrid`.
    """
    def __init__(self, grid, results):
        self._grid = grid
        self._results = list(results)

    @property
    def grid(self):
        return self._grid

    @property
    def results(self):
        return self._results

    def aggregate_frame(self):
        """
        Returns one row per grid point: ``point``, the grid coordinates,
        ``mean_fdr, mean_power, sd_power, R, failed``.
        """
        rows = []
        for index, result in enumerate(self._results, start=1):
            row = {"point": index}
            row.update({k: _plain(v) for k, v in result.coordinates.items()})
            row.update(result.aggregate())
            rows.append(row)
        return pd.DataFrame(rows)

    def write(self, out_dir, timings=False):
        """
        Writes ``aggregate.csv`` and one ``replications_<point>.csv`` per
        grid point into ``out_dir``. Returns the paths written.
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for index, result in enumerate(self._results, start=1):
            path = out_dir / "replications_{:03d}.csv".format(index)
            result.replications_frame(timings).to_csv(path, index=False, float_format="%.10g")
            written.append(path)
        path = out_dir / "aggregate.csv"
        self.aggregate_frame().to_csv(path, index=False, float_format="%.10g")
        written.append(path)
        return written

def run_experiment(spec, jobs=1, progress=False):
    """
    Runs every replication of one design and returns its
    :class:`ExperimentResult`. Replication seeds only depend on the master
    seed and the replication index, so results do not depend on ``jobs``.

    :param ExperimentSpec spec:
        The design.

    :param int jobs:
        Worker processes. Defaults to 1 (in process).

    :param bool progress:
        Show a progress bar. Defaults to :data:`False`.
    """
    logger.info("running %d replications (n=%d, p=%d, v=%d, a=%g)", spec.replications, spec.n, spec.p, spec.v, spec.a)
    results = _execute([(spec, rep) for rep in range(spec.replications)], jobs, progress)
    return ExperimentResult(spec, results)

def run_grid(grid, jobs=1, progress=False):
    """
    Runs every point of an :class:`ExperimentGrid`, sharing one worker pool
    across points, and returns a :class:`GridResult`.
    """
    tasks, owners = [], []
    for index, (_, spec) in enumerate(grid.points):
        for rep in range(spec.replications):
            tasks.append((spec, rep))
            owners.append(index)
    logger.info("running %d grid points, %d replications in total", len(grid), len(tasks))
    results = _execute(tasks, jobs, progress)
    per_point = [[] for _ in grid.points]
    for index, result in zip(owners, results):
        per_point[index].append(result)
    return GridResult(grid, [
        ExperimentResult(spec, per_point[index], coords)
        for index, (coords, spec) in enumerate(grid.points)
        ])
