"""Exact qubit model of the three-time experiment.

Two independent evaluations are provided:

- closed forms for the twelve joint probabilities, singles, correlators, LGI and the three
  NSIT values, written once and evaluated either on scalars (``math``) or on arrays
  (``numpy``);
- direct sequential-measurement traces built from the density matrix, unitaries and
  measurement operators, used as the oracle for the closed forms.

Measurements at t1 and t2 are the projectors P+ = diag(1, 0), P- = diag(0, 1); the t3
measurement is the diagonal POVM M± = ((1±a)I ± b σz)/2.

Every (Q1, Q3) entry, (-,-) included, carries the prefactor 1/4; with any other prefactor
the block would not sum to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import ModuleType
from typing import Any

import numpy as np

from lgi_randomness.core.types import (
    LGI_SIGNS,
    OUTCOMES,
    PAIRS,
    BlochVector,
    DerivedQuantities,
    Mode,
    Pair,
    PovmParams,
    ProbabilityTable,
    Strategy,
    StrategyBatch,
    UnitaryParams,
    validate_bloch,
    validate_povm,
)
from lgi_randomness.errors import InvalidParameterError, ZeroMarginalError

MARGINAL_TOLERANCE = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)
PROJECTORS: dict[int, np.ndarray] = {
    1: np.array([[1, 0], [0, 0]], dtype=complex),
    -1: np.array([[0, 0], [0, 1]], dtype=complex),
}


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------


def density_from_bloch(state: BlochVector) -> np.ndarray:
    """rho = (I + n.sigma) / 2."""
    problems = validate_bloch(state.nx, state.ny, state.nz)
    if problems:
        raise InvalidParameterError.from_problems(problems)
    return _density(np.float64(state.nx), np.float64(state.ny), np.float64(state.nz))


def unitary_from_params(p: UnitaryParams) -> np.ndarray:
    """[[e^{ix} cos z, e^{iy} sin z], [-e^{-iy} sin z, e^{-ix} cos z]]."""
    if not all(math.isfinite(v) for v in (p.x, p.y, p.z)):
        raise InvalidParameterError("unitary angles must be finite")
    return _unitary(np.float64(p.x), np.float64(p.y), np.float64(p.z))


def povm_elements(p: PovmParams) -> tuple[np.ndarray, np.ndarray]:
    """(M+, M-) with M± = ((1±a)I ± b σz)/2; M+ + M- = I."""
    problems = validate_povm(p.a, p.b)
    if problems:
        raise InvalidParameterError.from_problems(problems)
    plus, minus = _povm(np.float64(p.a), np.float64(p.b))
    return plus, minus


def _density(nx: Any, ny: Any, nz: Any) -> np.ndarray:
    nx, ny, nz = np.broadcast_arrays(np.asarray(nx), np.asarray(ny), np.asarray(nz))
    rho = np.empty(nx.shape + (2, 2), dtype=complex)
    rho[..., 0, 0] = (1 + nz) / 2
    rho[..., 0, 1] = (nx - 1j * ny) / 2
    rho[..., 1, 0] = (nx + 1j * ny) / 2
    rho[..., 1, 1] = (1 - nz) / 2
    return rho


def _unitary(x: Any, y: Any, z: Any) -> np.ndarray:
    x, y, z = np.broadcast_arrays(np.asarray(x), np.asarray(y), np.asarray(z))
    u = np.empty(x.shape + (2, 2), dtype=complex)
    cz, sz = np.cos(z), np.sin(z)
    u[..., 0, 0] = np.exp(1j * x) * cz
    u[..., 0, 1] = np.exp(1j * y) * sz
    u[..., 1, 0] = -np.exp(-1j * y) * sz
    u[..., 1, 1] = np.exp(-1j * x) * cz
    return u


def _povm(a: Any, b: Any) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    plus = np.zeros(a.shape + (2, 2), dtype=complex)
    minus = np.zeros(a.shape + (2, 2), dtype=complex)
    plus[..., 0, 0] = (1 + a + b) / 2
    plus[..., 1, 1] = (1 + a - b) / 2
    minus[..., 0, 0] = (1 - a - b) / 2
    minus[..., 1, 1] = (1 - a + b) / 2
    return plus, minus


def _dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def _trace(m: np.ndarray) -> np.ndarray:
    return np.real(np.trace(m, axis1=-2, axis2=-1))


# ---------------------------------------------------------------------------
# Trace oracle
# ---------------------------------------------------------------------------


def _check_labels(pair: Pair, a: int, b: int) -> None:
    problems: list[str] = []
    if tuple(pair) not in PAIRS:
        problems.append(f"invalid pair {pair}; expected one of {PAIRS}")
    if a not in OUTCOMES or b not in OUTCOMES:
        problems.append(f"outcomes must be +1 or -1, got ({a}, {b})")
    if problems:
        raise InvalidParameterError.from_problems(problems)


def _trace_joint(
    rho: np.ndarray,
    u1: np.ndarray,
    u2: np.ndarray,
    povm: dict[int, np.ndarray],
    pair: Pair,
    a: int,
    b: int,
) -> np.ndarray:
    pa = PROJECTORS[a]
    if pair == (1, 2):
        # tr(U1 Pa rho Pa U1^dag Pb)
        return _trace(u1 @ pa @ rho @ pa @ _dagger(u1) @ PROJECTORS[b])
    if pair == (1, 3):
        # tr(U2 U1 Pa rho Pa U1^dag U2^dag Mb)
        evolved = u2 @ u1 @ pa @ rho @ pa @ _dagger(u1) @ _dagger(u2)
        return _trace(evolved @ povm[b])
    # tr(U2 Pa U1 rho U1^dag Pa U2^dag Mb)
    evolved = u2 @ pa @ u1 @ rho @ _dagger(u1) @ pa @ _dagger(u2)
    return _trace(evolved @ povm[b])


def _trace_single(
    rho: np.ndarray,
    u1: np.ndarray,
    u2: np.ndarray,
    povm: dict[int, np.ndarray],
    time: int,
    a: int,
) -> np.ndarray:
    if time == 1:
        return _trace(rho @ PROJECTORS[a])
    evolved = u1 @ rho @ _dagger(u1)
    if time == 2:
        return _trace(evolved @ PROJECTORS[a])
    evolved = u2 @ evolved @ _dagger(u2)
    return _trace(evolved @ povm[a])


def _operators(batch: StrategyBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    rho = _density(batch.nx, batch.ny, batch.nz)
    u1 = _unitary(batch.x1, batch.y1, batch.z1)
    u2 = _unitary(batch.x2, batch.y2, batch.z2)
    plus, minus = _povm(batch.a, batch.b)
    return rho, u1, u2, {1: plus, -1: minus}


def joint_prob_trace(s: Strategy, pair: Pair, a: int, b: int) -> float:
    """Sequential-measurement probability P(a, b | Q_i, Q_j) by matrix products."""
    _check_labels(tuple(pair), a, b)
    rho, u1, u2, povm = _operators(StrategyBatch.repeat(s, 1))
    return float(_trace_joint(rho, u1, u2, povm, tuple(pair), a, b)[0])


def single_prob_trace(s: Strategy, time: int, a: int) -> float:
    """P(a | Q_time) with no earlier measurement, by matrix products."""
    if time not in (1, 2, 3) or a not in OUTCOMES:
        raise InvalidParameterError(f"invalid single label time={time}, a={a}")
    rho, u1, u2, povm = _operators(StrategyBatch.repeat(s, 1))
    return float(_trace_single(rho, u1, u2, povm, time, a)[0])


def trace_batch(batch: StrategyBatch) -> dict[tuple, np.ndarray]:
    """All joints (keyed ``(pair, a, b)``) and singles (keyed ``(time, a)``) for a batch."""
    rho, u1, u2, povm = _operators(batch)
    values: dict[tuple, np.ndarray] = {}
    for pair in PAIRS:
        for a in OUTCOMES:
            for b in OUTCOMES:
                values[(pair, a, b)] = _trace_joint(rho, u1, u2, povm, pair, a, b)
    for time in (1, 2, 3):
        for a in OUTCOMES:
            values[(time, a)] = _trace_single(rho, u1, u2, povm, time, a)
    return values


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class ClosedForm:
    """Closed-form values; every field is a float or an array of the batch shape."""

    joint: dict[Pair, dict[tuple[int, int], Any]]
    singles: dict[int, dict[int, Any]]
    correlators: dict[Pair, Any]
    lgi: Any
    nsit: tuple[Any, Any, Any]
    gamma: Any
    t: Any
    chi: Any
    xi: Any


def closed_form(
    nx: Any, ny: Any, nz: Any,
    x1: Any, y1: Any, z1: Any,
    x2: Any, y2: Any, z2: Any,
    a: Any, b: Any,
    lib: ModuleType = math,
) -> ClosedForm:
    """Every closed-form quantity; ``lib`` is ``math`` for scalars, ``numpy`` for arrays."""
    cos, sin = lib.cos, lib.sin
    c1, s1 = cos(2 * z1), sin(2 * z1)
    c2, s2 = cos(2 * z2), sin(2 * z2)
    t = x1 + x2 + y1 - y2
    ct, st = cos(t), sin(t)
    theta = x1 - y1
    along = nx * cos(theta) + ny * sin(theta)
    across = ny * cos(theta) - nx * sin(theta)

    chi = along * s1
    xi = ct * c1 * along + st * across
    gamma = b * (c1 * c2 - ct * s1 * s2)
    # Bloch z-component after U1, and after U2 U1.
    w2 = nz * c1 + chi
    w3 = w2 * c2 + s2 * (xi - nz * ct * s1)

    joint = {
        (1, 2): {
            (1, 1): (1 + nz) * (1 + c1) / 4,
            (1, -1): (1 + nz) * (1 - c1) / 4,
            (-1, 1): (1 - nz) * (1 - c1) / 4,
            (-1, -1): (1 - nz) * (1 + c1) / 4,
        },
        (1, 3): {
            (1, 1): (1 + nz) * (1 + a + gamma) / 4,
            (1, -1): (1 + nz) * (1 - a - gamma) / 4,
            (-1, 1): (1 - nz) * (1 + a - gamma) / 4,
            (-1, -1): (1 - nz) * (1 - a + gamma) / 4,
        },
        (2, 3): {
            (1, 1): (1 + a + b * c2) * (1 + w2) / 4,
            (1, -1): (1 - a - b * c2) * (1 + w2) / 4,
            (-1, 1): (1 + a - b * c2) * (1 - w2) / 4,
            (-1, -1): (1 - a + b * c2) * (1 - w2) / 4,
        },
    }
    singles = {
        1: {1: (1 + nz) / 2, -1: (1 - nz) / 2},
        2: {1: (1 + w2) / 2, -1: (1 - w2) / 2},
        3: {1: (1 + a + b * w3) / 2, -1: (1 - a - b * w3) / 2},
    }
    correlators = {
        (1, 2): c1,
        (1, 3): a * nz + gamma,
        (2, 3): a * nz * c1 + b * c2 + a * chi,
    }
    lgi = correlators[(1, 2)] + correlators[(2, 3)] - correlators[(1, 3)]
    nsit = (
        chi / 2,
        b * (c2 * chi + s2 * xi) / 2,
        b * s2 * (xi - nz * ct * s1) / 2,
    )
    return ClosedForm(joint, singles, correlators, lgi, nsit, gamma, t, chi, xi)


def closed_form_batch(batch: StrategyBatch) -> ClosedForm:
    return closed_form(**batch.columns(), lib=np)


def _strategy_closed_form(s: Strategy) -> ClosedForm:
    return closed_form(**s.to_flat(), lib=math)


def probability_table(s: Strategy) -> ProbabilityTable:
    """Fill every table field from the closed-form expressions."""
    cf = _strategy_closed_form(s)
    return ProbabilityTable(
        joint={pair: dict(block) for pair, block in cf.joint.items()},
        singles={time: dict(block) for time, block in cf.singles.items()},
        correlators=dict(cf.correlators),
        lgi=cf.lgi,
        nsit=cf.nsit,
    )


def derived_quantities(s: Strategy) -> DerivedQuantities:
    cf = _strategy_closed_form(s)
    return DerivedQuantities(gamma=cf.gamma, t=cf.t, chi=cf.chi, xi=cf.xi)


def correlators_from_joint(joint: dict[Pair, dict[tuple[int, int], float]]) -> dict[Pair, float]:
    """<Q_i Q_j> = sum_ab a b P(a, b | Q_i, Q_j)."""
    return {
        pair: sum(a * b * joint[pair][(a, b)] for a in OUTCOMES for b in OUTCOMES)
        for pair in PAIRS
    }


def lgi_from_correlators(correlators: dict[Pair, float]) -> float:
    return sum(sign * correlators[pair] for pair, sign in LGI_SIGNS.items())


def nsit_from_probabilities(
    joint: dict[Pair, dict[tuple[int, int], float]],
    plus_q2: float,
    plus_q3: float,
) -> tuple[float, float, float]:
    """P(+|Q_j) minus the (+ at Q_j) marginal of each pair block."""
    return (
        plus_q2 - joint[(1, 2)][(1, 1)] - joint[(1, 2)][(-1, 1)],
        plus_q3 - joint[(1, 3)][(1, 1)] - joint[(1, 3)][(-1, 1)],
        plus_q3 - joint[(2, 3)][(1, 1)] - joint[(2, 3)][(-1, 1)],
    )


def marginal_first(table: ProbabilityTable, pair: Pair, a: int) -> float:
    """P(a | Q_i) for the earlier time of ``pair``, summed out of its joint block."""
    return table.joint[pair][(a, 1)] + table.joint[pair][(a, -1)]


def conditional_probability(table: ProbabilityTable, pair: Pair, a: int, b: int) -> float:
    """P(b | a, Q_i, Q_j) = P(a, b | Q_i, Q_j) / P(a | Q_i)."""
    _check_labels(tuple(pair), a, b)
    marginal = marginal_first(table, tuple(pair), a)
    if marginal <= MARGINAL_TOLERANCE:
        raise ZeroMarginalError(f"P({a:+d}|Q{pair[0]}) = {marginal:.3g} vanishes")
    return table.joint[tuple(pair)][(a, b)] / marginal


def min_entropy(table: ProbabilityTable, mode: Mode = "joint") -> float:
    """-log2 of the largest joint (or conditional) probability over the 12 outcomes."""
    if mode == "joint":
        largest = max(value for *_, value in table.entries())
    else:
        values = []
        for pair, a, b, _ in table.entries():
            try:
                values.append(conditional_probability(table, pair, a, b))
            except ZeroMarginalError:
                continue
        largest = max(values)
    return -math.log2(largest)


# ---------------------------------------------------------------------------
# Sampling valid strategies
# ---------------------------------------------------------------------------


def random_strategy_batch(rng: np.random.Generator, n: int) -> StrategyBatch:
    """Strategies drawn uniformly from the Bloch ball, full angle ranges and valid POVMs."""
    direction = rng.normal(size=(n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = rng.random(n) ** (1.0 / 3.0)
    bloch = direction * radius[:, None]
    b = rng.random(n)
    a = (1.0 - b) * rng.uniform(-1.0, 1.0, n)
    angles = rng.uniform(-np.pi, np.pi, size=(6, n))
    return StrategyBatch(
        nx=bloch[:, 0], ny=bloch[:, 1], nz=bloch[:, 2],
        x1=angles[0], y1=angles[1], z1=angles[2],
        x2=angles[3], y2=angles[4], z2=angles[5],
        a=a, b=b,
    )


def random_strategy(rng: np.random.Generator) -> Strategy:
    return random_strategy_batch(rng, 1).strategy(0)
