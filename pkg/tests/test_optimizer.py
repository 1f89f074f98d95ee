import json
import math

import numpy as np
import pytest

from lgi_randomness.core.bounds import canonical_strategy, lemma_x_bound, pstar
from lgi_randomness.core.optimizer import (
    ALL_TARGETS,
    OptProblem,
    SolverOptions,
    decode,
    encode,
    maximize,
    randomness_vs_nsit_curve,
    residuals,
    strategy_from_theta,
)
from lgi_randomness.core.qubit import closed_form, conditional_probability, probability_table
from lgi_randomness.core.types import Strategy
from lgi_randomness.errors import InvalidParameterError
from lgi_randomness.schemas import OptResultModel

ALPHA_GRID = [round(0.05 * k, 2) for k in range(1, 11)]


def make_options(**overrides):
    base = {
        "restarts": 1,
        "penalty_stages": 2,
        "simplex_max_iter": 400,
        "polish_max_iter": 50,
        "workers": 1,
    }
    base.update(overrides)
    return SolverOptions(**base)


def target_value(result):
    table = probability_table(result.best_strategy)
    pair, a, b = result.best_target
    if result.problem.objective == "conditional":
        return conditional_probability(table, pair, a, b)
    return table.p(pair, a, b)


def test_residuals_examples():
    for alpha in (0.1, 0.3, 0.5):
        assert residuals(canonical_strategy(alpha), alpha) == pytest.approx((0, 0, 0, 0), abs=1e-10)
    assert residuals(Strategy(), 0.5) == pytest.approx((-0.5, 0, 0, 0), abs=1e-12)
    no_strength = Strategy.from_flat(
        {"nx": 0.2, "ny": 0.1, "nz": 0.3, "x1": 0.4, "y1": 0.0, "z1": 0.7,
         "x2": 0.0, "y2": 0.2, "z2": 0.5, "a": 0.0, "b": 0.0}
    )
    gap = residuals(no_strength, 0.2)[0]
    assert gap <= -0.2 + 1e-12


def test_parameterization_round_trip():
    rng = np.random.default_rng(4)
    for alpha in (0.2, 0.5):
        s = canonical_strategy(alpha)
        assert probability_table(strategy_from_theta(encode(s))).lgi == pytest.approx(1 + alpha)
    for theta in rng.normal(scale=3.0, size=(100, 11)):
        flat = decode(theta)
        assert flat["nx"] ** 2 + flat["ny"] ** 2 + flat["nz"] ** 2 <= 1 + 1e-12
        assert abs(flat["a"]) + flat["b"] <= 1 + 1e-12
        strategy_from_theta(theta)


def test_problem_validation():
    with pytest.raises(InvalidParameterError):
        OptProblem(alpha=0.0)
    with pytest.raises(InvalidParameterError):
        OptProblem(alpha=0.3, nsit_tolerance=0.5)
    with pytest.raises(InvalidParameterError):
        OptProblem(alpha=0.3, objective="cos2z1", target=((1, 3), 1, -1))
    with pytest.raises(InvalidParameterError):
        OptProblem(alpha=0.3, target=((2, 1), 1, 1))
    with pytest.raises(InvalidParameterError):
        SolverOptions(restarts=0)
    assert len(OptProblem(alpha=0.3).targets()) == 12
    assert OptProblem(alpha=0.3, objective="b_cos2z2").targets() == (None,)


def test_canonical_start_is_kept_when_optimal():
    problem = OptProblem(alpha=0.5, target=((1, 3), 1, -1))
    result = maximize(problem, make_options(), seed=0)
    assert result.converged
    assert result.best_value == pytest.approx(0.375, abs=2e-3)
    assert result.best_value <= 0.375 + 2e-3


def test_result_is_sound():
    problem = OptProblem(alpha=0.3, objective="conditional", target=((1, 3), 1, -1))
    result = maximize(problem, make_options(restarts=2), seed=3)
    assert result.converged
    assert result.best_value == pytest.approx(pstar(0.3, "conditional"), abs=2e-3)
    assert target_value(result) == pytest.approx(result.best_value, abs=1e-9)
    assert max(abs(r) for r in result.residuals) <= 1e-6
    assert result.restarts_used == 2
    assert type(result.converged) is bool
    assert type(result.best_value) is float
    dumped = OptResultModel.from_result(result, seed=3).model_dump_json()
    assert json.loads(dumped)["converged"] is True


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5])
def test_violating_optima_have_no_along_axis_terms(alpha):
    problem = OptProblem(alpha=alpha, objective="conditional", target=((1, 3), 1, -1))
    result = maximize(problem, make_options(restarts=2), seed=3)
    assert result.converged
    table = probability_table(result.best_strategy)
    assert max(abs(v) for v in table.nsit) <= 1e-6
    assert table.lgi > 1 + 1e-6
    cf = closed_form(**result.best_strategy.to_flat())
    assert abs(cf.chi) <= 2e-6
    assert abs(result.best_strategy.state.nz) < 1e-4


def test_relaxed_result_respects_tolerance():
    problem = OptProblem(alpha=0.4, nsit_tolerance=0.05, target=((1, 3), 1, -1))
    result = maximize(problem, make_options(restarts=2), seed=1)
    assert result.converged
    lgi_gap, *nsit = result.residuals
    assert abs(lgi_gap) <= 1e-6
    assert all(abs(v) <= 0.05 + 1e-6 for v in nsit)
    assert result.best_value >= pstar(0.4, "joint") - 1e-9


def test_same_seed_gives_identical_result():
    problem = OptProblem(alpha=0.3, target=((1, 2), 1, 1))
    first = maximize(problem, make_options(restarts=2), seed=42)
    second = maximize(problem, make_options(restarts=2), seed=42)
    assert first.best_value == second.best_value
    assert first.best_strategy == second.best_strategy
    assert first.best_restart == second.best_restart


def test_curve_rejects_empty_grids():
    with pytest.raises(InvalidParameterError):
        randomness_vs_nsit_curve([], [0.0])


@pytest.mark.slow
@pytest.mark.parametrize("mode", ["joint", "conditional"])
def test_bound_is_tight_over_alpha_grid(mode):
    options = SolverOptions(restarts=2, workers=1)
    for alpha in ALPHA_GRID:
        result = maximize(OptProblem(alpha=alpha, objective=mode), options, seed=0)
        assert result.converged
        assert abs(result.best_value - pstar(alpha, mode)) <= 2e-3
        assert max(abs(r) for r in result.residuals) <= 1e-6
        assert result.best_target in ALL_TARGETS


@pytest.mark.slow
def test_optimizer_reference_values():
    options = SolverOptions(restarts=4, workers=1)
    joint = maximize(OptProblem(alpha=0.3), options, seed=0)
    assert joint.best_value == pytest.approx(0.4831, abs=2e-3)
    conditional = maximize(OptProblem(alpha=0.5, objective="conditional"), options, seed=0)
    assert conditional.best_value == pytest.approx(0.75, abs=2e-3)


@pytest.mark.slow
def test_lemma_objectives_reach_their_maxima():
    options = SolverOptions(restarts=8, workers=1)
    for objective in ("cos2z1", "b_cos2z2"):
        result = maximize(OptProblem(alpha=0.3, objective=objective), options, seed=0)
        assert result.converged
        assert result.best_value == pytest.approx(lemma_x_bound(0.3), abs=2e-3)


@pytest.mark.slow
def test_parallel_restarts_match_serial():
    problem = OptProblem(alpha=0.25, target=((1, 3), 1, -1))
    serial = maximize(problem, make_options(restarts=4, workers=1), seed=9)
    parallel = maximize(problem, make_options(restarts=4, workers=2), seed=9)
    assert serial.best_value == parallel.best_value
    assert serial.best_strategy == parallel.best_strategy


@pytest.mark.slow
def test_relaxed_curve_is_monotone_in_v():
    options = SolverOptions(restarts=2, workers=1)
    rows = randomness_vs_nsit_curve([0.3, 0.5], [0.0, 0.05], seed=0, opts=options)
    by_key = {(row.alpha, row.v): row for row in rows}
    for alpha in (0.3, 0.5):
        exact = -math.log2(pstar(alpha, "conditional"))
        assert by_key[(alpha, 0.0)].bits == pytest.approx(exact, abs=2e-3)
        assert by_key[(alpha, 0.05)].bits <= by_key[(alpha, 0.0)].bits + 2e-3
    assert by_key[(0.5, 0.05)].bits > 0
