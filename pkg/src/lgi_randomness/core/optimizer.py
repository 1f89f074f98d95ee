"""Numerical maximization of outcome probabilities over qubit strategies.

The program maximizes one joint (or conditional) probability subject to
LGI = 1 + alpha and |NSIT_j| <= v for j = 1, 2, 3 (v = 0 gives the equalities).

Each local search runs on an unconstrained 11-dimensional parameter vector:

    [r, polar, azimuth, x1, y1, z1, x2, y2, z2, theta_b, u]

with Bloch vector r (clamped to [0, 1]) times the unit vector of (polar, azimuth),
b = sin^2 theta_b and a = clip(u, -1, 1) (1 - b). Constraints enter as a quadratic
penalty whose weight grows geometrically between Nelder-Mead stages; the last simplex
point is then polished with SLSQP under the explicit constraints.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import minimize

from lgi_randomness.config import Settings, get_settings
from lgi_randomness.core.bounds import alpha_value, canonical_strategy
from lgi_randomness.core.qubit import ClosedForm, closed_form, probability_table
from lgi_randomness.core.types import OUTCOMES, PAIRS, Pair, Strategy
from lgi_randomness.errors import InvalidParameterError

logger = logging.getLogger(__name__)

Objective = Literal["joint", "conditional", "cos2z1", "b_cos2z2"]
Target = tuple[Pair, int, int]

OBJECTIVES: tuple[Objective, ...] = ("joint", "conditional", "cos2z1", "b_cos2z2")
ALL_TARGETS: tuple[Target, ...] = tuple(
    (pair, a, b) for pair in PAIRS for a in OUTCOMES for b in OUTCOMES
)
MARGINAL_FLOOR = 1e-6
NSIT_TOLERANCE_MAX = 0.5
# r and u are the only coordinates with a clamp.
POLISH_BOUNDS = [(0.0, 1.0)] + [(None, None)] * 9 + [(-1.0, 1.0)]


@dataclass(frozen=True, slots=True)
class OptProblem:
    alpha: float
    nsit_tolerance: float = 0.0
    objective: Objective = "joint"
    target: Target | None = None

    def __post_init__(self) -> None:
        problems: list[str] = []
        try:
            alpha_value(self.alpha)
        except InvalidParameterError as exc:
            problems.append(str(exc))
        if not (0.0 <= self.nsit_tolerance < NSIT_TOLERANCE_MAX):
            problems.append(f"NSIT tolerance v must lie in [0, {NSIT_TOLERANCE_MAX})")
        if self.objective not in OBJECTIVES:
            problems.append(f"objective must be one of {OBJECTIVES}")
        if self.target is not None:
            if self.objective not in ("joint", "conditional"):
                problems.append("a target outcome only applies to probability objectives")
            elif self.target not in ALL_TARGETS:
                problems.append(f"invalid target {self.target}")
        if problems:
            raise InvalidParameterError.from_problems(problems)

    def targets(self) -> tuple[Target | None, ...]:
        if self.objective in ("cos2z1", "b_cos2z2"):
            return (None,)
        return (self.target,) if self.target is not None else ALL_TARGETS


@dataclass(frozen=True, slots=True)
class SolverOptions:
    restarts: int = 64
    penalty_start: float = 1e2
    penalty_growth: float = 10.0
    penalty_stages: int = 4
    tolerance: float = 1e-6
    simplex_max_iter: int = 4000
    polish_max_iter: int = 200
    workers: int = 1

    def __post_init__(self) -> None:
        if self.restarts < 1:
            raise InvalidParameterError("restarts must be at least 1")
        if self.penalty_stages < 1 or self.penalty_start <= 0 or self.penalty_growth < 1:
            raise InvalidParameterError("invalid penalty schedule")

    @classmethod
    def from_settings(cls, settings: Settings | None = None, **overrides) -> SolverOptions:
        settings = settings or get_settings()
        values = {
            "restarts": settings.restarts,
            "penalty_start": settings.penalty_start,
            "penalty_growth": settings.penalty_growth,
            "penalty_stages": settings.penalty_stages,
            "tolerance": settings.constraint_tolerance,
            "simplex_max_iter": settings.simplex_max_iter,
            "polish_max_iter": settings.polish_max_iter,
            "workers": settings.workers,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True, slots=True)
class OptResult:
    best_value: float
    best_strategy: Strategy
    residuals: tuple[float, float, float, float]
    restarts_used: int
    converged: bool
    problem: OptProblem
    best_target: Target | None = None
    best_restart: int = 0

    @property
    def bits(self) -> float:
        return -math.log2(self.best_value) if self.best_value > 0 else math.inf


@dataclass(frozen=True, slots=True)
class NsitCurveRow:
    alpha: float
    v: float
    bits: float
    value: float
    converged: bool


@dataclass(slots=True)
class _Candidate:
    value: float
    violation: float
    theta: np.ndarray
    target: Target | None
    restart: int
    feasible: bool = field(default=False)


# ---------------------------------------------------------------------------
# Parameterization
# ---------------------------------------------------------------------------


def decode(theta: Sequence[float]) -> dict[str, float]:
    r = min(max(theta[0], 0.0), 1.0)
    polar, azimuth = theta[1], theta[2]
    b = math.sin(theta[9]) ** 2
    a = min(max(theta[10], -1.0), 1.0) * (1.0 - b)
    return {
        "nx": r * math.sin(polar) * math.cos(azimuth),
        "ny": r * math.sin(polar) * math.sin(azimuth),
        "nz": r * math.cos(polar),
        "x1": theta[3],
        "y1": theta[4],
        "z1": theta[5],
        "x2": theta[6],
        "y2": theta[7],
        "z2": theta[8],
        "a": a,
        "b": b,
    }


def encode(strategy: Strategy) -> np.ndarray:
    flat = strategy.to_flat()
    r = strategy.state.radius
    polar = math.acos(max(-1.0, min(1.0, flat["nz"] / r))) if r > 0 else 0.0
    azimuth = math.atan2(flat["ny"], flat["nx"]) if r > 0 else 0.0
    b = flat["b"]
    u = flat["a"] / (1.0 - b) if b < 1.0 else 0.0
    return np.array(
        [
            r, polar, azimuth,
            flat["x1"], flat["y1"], flat["z1"],
            flat["x2"], flat["y2"], flat["z2"],
            math.asin(math.sqrt(min(1.0, b))), u,
        ],
        dtype=float,
    )


def strategy_from_theta(theta: Sequence[float]) -> Strategy:
    flat = decode(theta)
    # Clean rounding overshoot before validation.
    radius = math.sqrt(flat["nx"] ** 2 + flat["ny"] ** 2 + flat["nz"] ** 2)
    if radius > 1.0:
        for key in ("nx", "ny", "nz"):
            flat[key] /= radius
    return Strategy.from_flat(flat)


def _random_theta(rng: np.random.Generator) -> np.ndarray:
    return np.concatenate(
        [
            [rng.random()],
            [math.acos(rng.uniform(-1.0, 1.0)), rng.uniform(-math.pi, math.pi)],
            rng.uniform(-math.pi, math.pi, 6),
            [rng.uniform(0.0, math.pi / 2.0), rng.uniform(-1.0, 1.0)],
        ]
    )


# ---------------------------------------------------------------------------
# Objective and constraints
# ---------------------------------------------------------------------------


def residuals(s: Strategy, alpha: float) -> tuple[float, float, float, float]:
    """(LGI - (1 + alpha), NSIT_1, NSIT_2, NSIT_3)."""
    table = probability_table(s)
    return (table.lgi - (1.0 + float(alpha)), *table.nsit)


def _excess(nsit: float, v: float) -> float:
    return math.copysign(max(0.0, abs(nsit) - v), nsit)


def _objective_value(cf: ClosedForm, flat: dict[str, float], objective: Objective,
                     target: Target | None) -> float:
    if objective == "cos2z1":
        return math.cos(2.0 * flat["z1"])
    if objective == "b_cos2z2":
        return flat["b"] * math.cos(2.0 * flat["z2"])
    pair, a, b = target  # type: ignore[misc]
    joint = cf.joint[pair][(a, b)]
    if objective == "joint":
        return joint
    marginal = cf.joint[pair][(a, 1)] + cf.joint[pair][(a, -1)]
    if marginal < MARGINAL_FLOOR:
        return 0.0
    return joint / marginal


class _Evaluator:
    """Objective and constraint values for one (problem, target), cached on the last point."""

    def __init__(self, problem: OptProblem, target: Target | None):
        self.problem = problem
        self.target = target
        self.alpha = float(problem.alpha)
        self._key: bytes | None = None
        self._value = 0.0
        self._constraints = (0.0, 0.0, 0.0, 0.0)

    def evaluate(self, theta: np.ndarray) -> tuple[float, tuple[float, float, float, float]]:
        key = np.asarray(theta, dtype=float).tobytes()
        if key != self._key:
            flat = decode(theta)
            cf = closed_form(**flat)
            self._value = _objective_value(cf, flat, self.problem.objective, self.target)
            self._constraints = (cf.lgi - 1.0 - self.alpha, *cf.nsit)
            self._key = key
        return self._value, self._constraints

    def violation(self, theta: np.ndarray) -> float:
        _, (lgi_gap, *nsit) = self.evaluate(theta)
        v = self.problem.nsit_tolerance
        return max(abs(lgi_gap), *(abs(_excess(n, v)) for n in nsit))

    def penalized(self, theta: np.ndarray, weight: float) -> float:
        value, (lgi_gap, *nsit) = self.evaluate(theta)
        v = self.problem.nsit_tolerance
        excess = sum(_excess(n, v) ** 2 for n in nsit)
        return -value + weight * (lgi_gap * lgi_gap + excess)

    def constraints(self) -> list[dict]:
        v = self.problem.nsit_tolerance
        cons: list[dict] = [{"type": "eq", "fun": lambda th: self.evaluate(th)[1][0]}]
        for j in (1, 2, 3):
            if v == 0.0:
                cons.append({"type": "eq", "fun": lambda th, j=j: self.evaluate(th)[1][j]})
            else:
                cons.append({"type": "ineq", "fun": lambda th, j=j: v - self.evaluate(th)[1][j]})
                cons.append({"type": "ineq", "fun": lambda th, j=j: v + self.evaluate(th)[1][j]})
        return cons


def _local_search(
    evaluator: _Evaluator,
    start: np.ndarray,
    options: SolverOptions,
    restart: int,
) -> _Candidate:
    candidates = [start]
    theta = start
    weight = options.penalty_start
    for _ in range(options.penalty_stages):
        result = minimize(
            evaluator.penalized,
            theta,
            args=(weight,),
            method="Nelder-Mead",
            options={
                "maxiter": options.simplex_max_iter,
                "maxfev": 2 * options.simplex_max_iter,
                "xatol": 1e-10,
                "fatol": 1e-13,
                "adaptive": True,
            },
        )
        theta = result.x
        weight *= options.penalty_growth
    candidates.append(theta)

    polished = minimize(
        lambda th: -evaluator.evaluate(th)[0],
        theta,
        method="SLSQP",
        bounds=POLISH_BOUNDS,
        constraints=evaluator.constraints(),
        options={"maxiter": options.polish_max_iter, "ftol": 1e-12},
    )
    if np.all(np.isfinite(polished.x)):
        candidates.append(polished.x)

    best: _Candidate | None = None
    for point in candidates:
        value, _ = evaluator.evaluate(point)
        violation = evaluator.violation(point)
        candidate = _Candidate(
            value=value,
            violation=violation,
            theta=np.array(point, dtype=float),
            target=evaluator.target,
            restart=restart,
            feasible=violation <= options.tolerance,
        )
        if best is None or _better(candidate, best):
            best = candidate
    assert best is not None
    return best


def _better(candidate: _Candidate, incumbent: _Candidate) -> bool:
    """Feasible beats infeasible; then higher value (feasible) or lower violation."""
    if candidate.feasible != incumbent.feasible:
        return candidate.feasible
    if candidate.feasible:
        return candidate.value > incumbent.value
    return candidate.violation < incumbent.violation


def _start_point(problem: OptProblem, target_index: int, restart: int, seed: int) -> np.ndarray:
    if restart == 0:
        return encode(canonical_strategy(problem.alpha))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(target_index, restart)))
    return _random_theta(rng)


def _run_restart(
    problem: OptProblem,
    options: SolverOptions,
    target_index: int,
    restart: int,
    seed: int,
) -> _Candidate:
    target = problem.targets()[target_index]
    evaluator = _Evaluator(problem, target)
    start = _start_point(problem, target_index, restart, seed)
    return _local_search(evaluator, start, options, restart)


def _run_restart_packed(args: tuple) -> _Candidate:
    return _run_restart(*args)


def maximize(problem: OptProblem, opts: SolverOptions | None = None, seed: int = 0) -> OptResult:
    """Multi-start maximization; restart 0 of every target starts at the canonical strategy."""
    options = opts or SolverOptions.from_settings()
    tasks = [
        (problem, options, target_index, restart, seed)
        for target_index in range(len(problem.targets()))
        for restart in range(options.restarts)
    ]
    if options.workers > 1:
        with ProcessPoolExecutor(max_workers=options.workers) as pool:
            outcomes = list(pool.map(_run_restart_packed, tasks, chunksize=4))
    else:
        outcomes = [_run_restart_packed(task) for task in tasks]

    # Tasks are ordered by (target, restart), so strict comparison keeps the lowest index on ties.
    best = outcomes[0]
    for candidate in outcomes[1:]:
        if _better(candidate, best):
            best = candidate

    strategy = strategy_from_theta(best.theta)
    result = OptResult(
        best_value=float(best.value),
        best_strategy=strategy,
        residuals=residuals(strategy, problem.alpha),
        restarts_used=len(tasks),
        converged=bool(best.feasible),
        problem=problem,
        best_target=best.target,
        best_restart=best.restart,
    )
    logger.info(
        f"alpha={problem.alpha:g} v={problem.nsit_tolerance:g} {problem.objective}: "
        f"best={result.best_value:.6f} converged={result.converged} "
        f"({len(tasks)} local searches)"
    )
    if not result.converged:
        logger.warning(f"No restart met the constraint tolerance {options.tolerance:g}")
    return result


def randomness_vs_nsit_curve(
    alphas: Sequence[float],
    v_values: Sequence[float],
    seed: int = 0,
    opts: SolverOptions | None = None,
) -> list[NsitCurveRow]:
    """Conditional-mode certified bits for each (alpha, v) grid point."""
    if len(alphas) == 0 or len(v_values) == 0:
        raise InvalidParameterError("alpha and v grids must be non-empty")
    rows: list[NsitCurveRow] = []
    for alpha in alphas:
        for v in v_values:
            problem = OptProblem(
                alpha=float(alpha), nsit_tolerance=float(v), objective="conditional"
            )
            result = maximize(problem, opts, seed=seed)
            rows.append(
                NsitCurveRow(
                    alpha=float(alpha),
                    v=float(v),
                    bits=max(0.0, result.bits),
                    value=result.best_value,
                    converged=result.converged,
                )
            )
    return rows
