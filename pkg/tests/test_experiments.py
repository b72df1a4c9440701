import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from bkfilter.dataset import ResponseKind
from bkfilter.exceptions import IndexOutOfRange, InvalidSpec, ParseError
from bkfilter.experiments import (
    PRESETS,
    BetaLaw,
    CovarianceCase,
    ExperimentGrid,
    ExperimentSpec,
    covariance_matrix,
    generate_dataset,
    grid_from_mapping,
    load_spec,
    run_experiment,
    run_grid,
    run_replication,
    score,
)
from bkfilter.gaussian import RngStream, is_positive_definite
from bkfilter.gibbs import KnockoffUpdate

def small_spec(**changes):
    values = dict(n=120, p=6, v=2, a=3.0, sigma2=1.0, burn_in=20, samples=60, replications=2, seed=3)
    values.update(changes)
    return ExperimentSpec(**values)

def comparable(result):
    return [(r.rep, r.seed, r.h1, r.selected, r.fdp, r.power, r.error) for r in result.replications]

@pytest.mark.parametrize("case", list(CovarianceCase))
def test_covariance_zero_rho_is_identity(case):
    assert_array_equal(covariance_matrix(case, 0.0, 4), np.eye(4))

def test_covariance_autocorr():
    assert_allclose(covariance_matrix("autocorr", 0.6, 3),
                    [[1.0, 0.6, 0.36], [0.6, 1.0, 0.6], [0.36, 0.6, 1.0]])

def test_covariance_equicorr():
    assert_allclose(covariance_matrix("equicorr", 0.3, 3),
                    [[1.0, 0.3, 0.3], [0.3, 1.0, 0.3], [0.3, 0.3, 1.0]])

@pytest.mark.parametrize("case", ["autocorr", "equicorr"])
@pytest.mark.parametrize("rho", [round(0.1 * k, 1) for k in range(10)])
def test_covariance_positive_definite(case, rho):
    assert is_positive_definite(covariance_matrix(case, rho, 30))

def test_score_examples():
    assert score([1, 2, 3], [1, 2, 3], 5) == (0.0, 1.0)
    assert score([], [1, 2], 5) == (0.0, 0.0)
    fdp, power = score([0, 1, 2], [1, 2, 3, 4], 5)
    assert fdp == pytest.approx(1 / 3)
    assert power == pytest.approx(0.5)
    assert score([0], [], 3) == (1.0, 0.0)
    with pytest.raises(IndexOutOfRange):
        score([5], [0], 5)

def test_generate_dataset_uniform_law():
    spec = small_spec(n=50, p=8, v=3)
    data, beta, h1 = generate_dataset(spec, RngStream(1, stream=1))
    assert (data.n, data.p) == (50, 8)
    assert h1.size == 3
    assert_array_equal(np.flatnonzero(beta), h1)
    assert np.all(np.abs(beta) <= 3.0)
    assert data.kind is ResponseKind.LINEAR

def test_generate_dataset_fixed_probit():
    spec = small_spec(n=40, p=5, v=2, a=2.0, response="probit", beta_law="fixed")
    data, beta, h1 = generate_dataset(spec, RngStream(2, stream=1))
    assert_array_equal(np.abs(beta[h1]), 2.0)
    assert set(np.unique(data.y)) <= {0.0, 1.0}
    assert data.kind is ResponseKind.PROBIT

def test_probit_design_has_unit_noise():
    first = generate_dataset(small_spec(response="probit", sigma2=1.0), RngStream(5, stream=1))
    second = generate_dataset(small_spec(response="probit", sigma2=25.0), RngStream(5, stream=1))
    assert_array_equal(first[0].y, second[0].y)

def test_generate_dataset_reproducible():
    spec = small_spec()
    first = generate_dataset(spec, RngStream(4, stream=1))
    second = generate_dataset(spec, RngStream(4, stream=1))
    assert_array_equal(first[0].x, second[0].x)
    assert_array_equal(first[1], second[1])

def test_spec_coerces_values():
    spec = ExperimentSpec(n=100.0, case="autocorr", rho=0.5, statistic="squared-diff")
    assert spec.n == 100 and isinstance(spec.n, int)
    assert spec.case is CovarianceCase.AUTOCORR
    assert spec.as_dict()["case"] == "autocorr"
    assert spec.beta_law is BetaLaw.UNIFORM
    assert spec.chain_config(1).knockoff_update is KnockoffUpdate.MARGINAL
    assert ExperimentSpec(knockoff_update="conditional").chain_config(1).knockoff_update is KnockoffUpdate.CONDITIONAL

@pytest.mark.parametrize("changes", [
    {"v": 40},
    {"n": 0},
    {"rho": 1.0},
    {"alpha": 1.0},
    {"case": "banded"},
    {"n": "many"},
    {"prior": "lasso"},
    {"response": "probit", "prior": "spike-slab"},
    {"xi": 1.5, "prior": "spike-slab"},
    {"use_true_sigma": "yes"},
    {"knockoff_update": "exact"},
])
def test_spec_validation(changes):
    with pytest.raises(InvalidSpec):
        ExperimentSpec(**changes)

def test_grid_unknown_key_named():
    with pytest.raises(InvalidSpec, match="'colour'"):
        grid_from_mapping({"colour": 3})
    with pytest.raises(InvalidSpec, match="'shade'"):
        grid_from_mapping({"grid": {"shade": [1, 2]}})
    with pytest.raises(InvalidSpec, match="preset"):
        grid_from_mapping({}, preset="nonexistent")

def test_grid_preset_sizes():
    grid = grid_from_mapping({}, preset="strength-grid")
    assert len(grid) == 80
    assert list(grid.axes) == ["n", "a"]
    coords, spec = grid.points[0]
    assert coords == {"n": 100, "a": 0.2}
    assert spec.n == 100 and spec.a == 0.2
    assert len(grid_from_mapping({"n": 500}, preset="strength-grid")) == 20
    assert len(grid_from_mapping({}, preset="sparse-grid")) == 120
    assert len(grid_from_mapping({}, preset="probit-planted")) == 1

def test_grid_rejects_seed_axis():
    with pytest.raises(InvalidSpec):
        ExperimentGrid(ExperimentSpec(), {"seed": [1, 2]})

def test_grid_rejects_invalid_point():
    with pytest.raises(InvalidSpec, match="grid point"):
        grid_from_mapping({"p": 5, "grid": {"v": [1, 6]}})

def test_grid_with_base():
    grid = grid_from_mapping({"grid": {"a": [1.0, 2.0]}}).with_base(replications=3)
    assert all(spec.replications == 3 for _, spec in grid.points)

def test_presets_are_valid():
    for name in PRESETS:
        assert len(grid_from_mapping({}, preset=name)) >= 1

def test_load_spec(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("preset: strength-grid\nn: 200\nreplications: 5\ngrid:\n  a: [1.0, 2.0]\n")
    grid = load_spec(path)
    assert len(grid) == 2
    assert grid.base.n == 200
    assert grid.base.replications == 5

def test_load_spec_errors(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("n: [1, 2\n")
    with pytest.raises(ParseError):
        load_spec(path)
    path.write_text("- 1\n- 2\n")
    with pytest.raises(InvalidSpec):
        load_spec(path)
    with pytest.raises(FileNotFoundError):
        load_spec(tmp_path / "absent.yaml")

def test_single_replication_aggregate():
    result = run_experiment(small_spec(replications=1))
    [rep] = result.replications
    assert rep.ok
    agg = result.aggregate()
    assert agg["R"] == 1
    assert agg["mean_fdr"] == rep.fdp
    assert agg["mean_power"] == rep.power
    assert agg["sd_power"] == 0.0

def test_replication_is_deterministic():
    spec = small_spec()
    first, second = run_replication(spec, 1), run_replication(spec, 1)
    assert (first.seed, first.h1, first.selected) == (second.seed, second.h1, second.selected)
    assert run_replication(spec, 0).seed != first.seed

def test_estimated_moments_replication():
    rep = run_replication(small_spec(use_true_sigma=False), 0)
    assert rep.ok
    assert 0.0 <= rep.power <= 1.0

def test_parallel_matches_serial():
    spec = small_spec(replications=3)
    assert comparable(run_experiment(spec, jobs=2)) == comparable(run_experiment(spec, jobs=1))

def test_failed_replication_recorded():
    result = run_experiment(small_spec(n=10, p=6, v=2, replications=2))
    assert result.failed == 2
    assert all(r.error.startswith("SingularGram") for r in result.replications)
    agg = result.aggregate()
    assert agg["R"] == 0 and agg["failed"] == 2
    assert np.isnan(agg["mean_fdr"])

def test_grid_write(tmp_path):
    grid = grid_from_mapping({"n": 100, "p": 5, "v": 2, "sigma2": 1.0, "burn_in": 10, "samples": 30,
                              "replications": 2, "grid": {"a": [0.5, 3.0]}})
    result = run_grid(grid)
    written = result.write(tmp_path)
    assert [path.name for path in written] == ["replications_001.csv", "replications_002.csv", "aggregate.csv"]
    aggregate = pd.read_csv(tmp_path / "aggregate.csv")
    assert list(aggregate.columns) == ["point", "a", "mean_fdr", "mean_power", "sd_power", "R", "failed"]
    assert list(aggregate["a"]) == [0.5, 3.0]
    reps = pd.read_csv(tmp_path / "replications_001.csv", keep_default_na=False)
    assert list(reps.columns) == ["rep", "seed", "fdp", "power", "n_selected", "selected", "h1", "error"]

    result.write(tmp_path / "timed", timings=True)
    reps = pd.read_csv(tmp_path / "timed" / "replications_002.csv")
    assert "runtime_s" in reps.columns
    assert np.all(reps["runtime_s"] > 0)
