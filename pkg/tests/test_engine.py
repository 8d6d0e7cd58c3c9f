import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apulse.acquisition import AcquisitionSpec
from apulse.bench import make_uniform_grid
from apulse.engine import (
    Label,
    aggregate_curves,
    classify_with_confidence,
    f1_score,
    fitting_errors,
    hard_classify,
    iterations_to_threshold,
    prepare_prior,
    run_lse,
    run_repeats,
)
from apulse.gp import GPConfig, GPState
from apulse.kernels import KernelSpec
from apulse.problem import Direction, Problem
from apulse.transfer import ClosedFormPrior, ZeroPrior


def test_classify_examples():
    assert classify_with_confidence(10.0, 1.0, 0.0, 3.0) is Label.IN
    assert classify_with_confidence(-10.0, 1.0, 0.0, 3.0) is Label.OUT
    assert classify_with_confidence(1.0, 1.0, 0.0, 3.0) is Label.UNCLASSIFIED
    assert classify_with_confidence(0.001, 0.0, 0.0, 100.0) is Label.IN
    assert classify_with_confidence(10.0, 1.0, 0.0, 3.0, Direction.SUB) is Label.OUT
    with pytest.raises(ValueError):
        classify_with_confidence(0.0, 1.0, 0.0, 0.0)


def test_hard_classify_ties_out():
    assert hard_classify(1.0, 1.0) is Label.OUT
    assert hard_classify(1.0, 1.0, Direction.SUB) is Label.OUT
    assert hard_classify(0.5, 1.0, "sub") is Label.IN


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(0, 3), st.floats(-5, 5), st.floats(0.1, 5), st.sampled_from(["super", "sub"]))
def test_confidence_rule_never_flips_hard_label(mu, sigma, h, beta, direction):
    c = classify_with_confidence(mu, sigma, h, beta, direction)
    if c is not Label.UNCLASSIFIED:
        assert c == hard_classify(mu, h, direction)


def test_f1_examples():
    truth = np.array([1, 1, 1, 0, 0])
    assert f1_score(np.array([1, 1, 0, 1, 0]), truth) == pytest.approx(2 / 3)
    assert f1_score(truth, truth) == 1.0
    assert f1_score(np.zeros(5), truth) == 0.0
    assert f1_score(np.array([-1, -1, 1, 0, 0]), truth) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        f1_score(np.ones(3), truth)


def test_iterations_to_threshold():
    assert iterations_to_threshold([0.1, 0.5, 0.8, 0.7]) == 3
    assert iterations_to_threshold([0.1, 0.5]) is None
    assert iterations_to_threshold([0.9], 0.8) == 1


def toy_problem(budget=12, noise_sd=0.05):
    f = lambda Z: np.sin(3 * Z[:, 0]) + np.cos(2 * Z[:, 1])
    grid = make_uniform_grid([(0, 2), (0, 2)], (12, 12))
    return Problem(f, 0.5, "super", grid, grid, budget, noise_sd, name="toy",
                   bounds=np.array([(0, 2), (0, 2)], float)), f


FAST = GPConfig(n_starts=2, maxfev=80)


@pytest.mark.parametrize("mode", ["scratch", "vanilla", "aplse"])
@pytest.mark.parametrize("kind", ["straddle", "c2lse", "rmile"])
def test_run_shapes_and_bounds(mode, kind):
    p, f = toy_problem(budget=6)
    prior = ClosedFormPrior(lambda Z: 0.8 * f(Z))
    r = run_lse(p, mode, prior, AcquisitionSpec(kind, mc_samples=8), FAST, seed=1)
    assert r.selected_points.shape == (6, 2)
    assert len(r.observations) == len(r.f1_curve) == len(r.wall_times) == 6
    assert np.all((r.f1_curve >= 0) & (r.f1_curve <= 1))
    assert set(np.unique(r.final_labels)) <= {0, 1}


def test_run_is_deterministic(tmp_path):
    p, f = toy_problem()
    prior = ClosedFormPrior(lambda Z: 0.8 * f(Z))
    a = run_lse(p, "aplse", prior, None, FAST, seed=4)
    b = run_lse(p, "aplse", prior, None, FAST, seed=4)
    c = run_lse(p, "aplse", prior, None, FAST, seed=5)
    assert np.array_equal(a.selected_points, b.selected_points)
    assert np.array_equal(a.observations, b.observations)
    assert not np.array_equal(a.observations, c.observations)


def test_vanilla_zero_prior_equals_scratch():
    p, _ = toy_problem()
    a = run_lse(p, "vanilla", ZeroPrior(), None, FAST, seed=2)
    b = run_lse(p, "scratch", None, None, FAST, seed=2)
    np.testing.assert_array_equal(a.selected_indices, b.selected_indices)
    np.testing.assert_allclose(a.f1_curve, b.f1_curve)


def test_stop_at_f1_truncates_identically():
    p, f = toy_problem(budget=15)
    prior = ClosedFormPrior(f)
    full = run_lse(p, "aplse", prior, None, FAST, seed=0)
    stopped = run_lse(p, "aplse", prior, None, FAST, seed=0, stop_at_f1=0.5)
    n = stopped.iterations
    assert n <= full.iterations
    np.testing.assert_array_equal(stopped.f1_curve, full.f1_curve[:n])
    assert stopped.f1_curve[-1] >= 0.5 or n == full.iterations


def test_perfect_prior_is_accurate_at_once():
    p, f = toy_problem(budget=3, noise_sd=0.0)
    r = run_lse(p, "aplse", ClosedFormPrior(f), None, FAST, seed=0)
    assert r.f1_curve[0] == 1.0


def test_theorem_check_during_run():
    p, f = toy_problem(budget=10)
    r = run_lse(p, "aplse", ClosedFormPrior(lambda Z: 0.5 * f(Z) + 0.3), None, FAST, seed=3,
                theorem_check_every=2)
    assert len(r.theorem_checks) == 5
    for e_t, e_b, e_u in r.theorem_checks:
        assert e_t <= e_b * (1 + 1e-8) and e_b <= e_u * (1 + 1e-8)


def test_fitting_errors_zero_prior(rng):
    X, Y = rng.uniform(size=(5, 2)), rng.normal(size=5)
    e_t, e_b, e_u = fitting_errors(GPState(X, Y, KernelSpec()), None)
    assert e_u == pytest.approx(np.sum(Y ** 2))
    assert e_t <= e_b <= e_u


def test_mode_requirements():
    p, _ = toy_problem()
    with pytest.raises(ValueError):
        run_lse(p, "vanilla", None)
    with pytest.raises(ValueError):
        run_lse(p, "diffgp", None)
    with pytest.raises(ValueError):
        prepare_prior(p, "aplse", FAST, 0)


def test_diffgp_mode_runs():
    p, f = toy_problem(budget=5)

    def sampler(r):
        X = r.uniform(0, 2, size=(20, 2))
        return X, f(X)

    p.source_sampler = sampler
    _, model = prepare_prior(p, "diffgp", FAST, 0)
    r = run_lse(p, "diffgp", None, None, FAST, seed=0, diffgp=model)
    assert r.iterations == 5


def test_runresult_serialisation(tmp_path):
    p, f = toy_problem(budget=4)
    r = run_lse(p, "aplse", ClosedFormPrior(f), None, FAST, seed=0)
    r.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "iteration,x0,x1,y,f1,wall_ms"
    assert len(lines) == 5
    r.to_json(tmp_path / "r.json")
    s = json.loads((tmp_path / "r.json").read_text())
    assert s["mode"] == "aplse" and s["seed"] == 0


def test_aggregate_curves_padding():
    mean, se = aggregate_curves([np.array([0.2, 0.4, 0.6]), np.array([0.4])])
    np.testing.assert_allclose(mean, [0.3, 0.4, 0.6])
    assert se[0] == pytest.approx(np.std([0.2, 0.4], ddof=1) / np.sqrt(2))
    assert se[2] == 0.0


def test_run_repeats_and_medians():
    p, f = toy_problem(budget=6)
    prior = ClosedFormPrior(lambda Z: 0.9 * f(Z))
    s = run_repeats(p, "aplse", None, FAST, seeds=[0, 1, 2], prior=prior, target=0.99)
    assert len(s.runs) == 3 and len(s.mean_curve) == 6
    assert np.all(s.stderr_curve >= 0)


def test_median_ranks_unreached_last():
    from apulse.engine import RepeatSummary

    s = RepeatSummary("aplse", [0, 1, 2], np.zeros(1), np.zeros(1), [5, None, 7], [])
    assert s.median_iterations() == 7.0
    assert s.mean_iterations() is None
    s2 = RepeatSummary("aplse", [0, 1, 2], np.zeros(1), np.zeros(1), [None, None, 7], [])
    assert s2.median_iterations() is None
