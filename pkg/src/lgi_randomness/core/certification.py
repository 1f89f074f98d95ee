"""Finite-statistics certification of LGI randomness under memory effects.

The LGI estimator scores each pair-setting round by sign(x, y) a b / P(x, y), with
P(x, y) renormalized over the three pair settings, so its mean is the LGI value of the
device. Azuma-Hoeffding bounds the downward deviation of the running mean by

    eps = (1/q + Iq) sqrt(2 ln(1/delta) / n)

and the certified min-entropy per round is f(I_hat - eps - 1), where f is the joint or
conditional bound from ``bounds``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from lgi_randomness.config import get_settings
from lgi_randomness.core.bounds import ALPHA_MAX, entropy, validate_mode
from lgi_randomness.core.types import (
    LGI_SIGNS,
    OUTCOMES,
    PAIRS,
    SINGLE_SETTINGS,
    Mode,
    ProbabilityTable,
    Setting,
    SettingsDistribution,
    TrialRecord,
    TrialStream,
)
from lgi_randomness.errors import InvalidParameterError

logger = logging.getLogger(__name__)

# Coefficient keys are (a, b, x, y); a = 0 stands for "no earlier outcome".
CoefficientKey = tuple[int, int, int, int]
Coefficients = dict[CoefficientKey, float]

# Which single setting and which pair setting each NSIT condition compares.
NSIT_SETTINGS: tuple[tuple[Setting, Setting], ...] = (
    ((0, 2), (1, 2)),
    ((0, 3), (1, 3)),
    ((0, 3), (2, 3)),
)


@dataclass(frozen=True, slots=True)
class EstimatorSpec:
    dist: SettingsDistribution
    lgi: Coefficients
    nsit: tuple[Coefficients, Coefficients, Coefficients]

    def c(self, a: int, b: int, x: int, y: int) -> float:
        return self.lgi.get((a, b, x, y), 0.0)

    def m(self, j: int, a: int, b: int, x: int, y: int) -> float:
        return self.nsit[j - 1].get((a, b, x, y), 0.0)


@dataclass(frozen=True, slots=True)
class CertificationReport:
    n: int
    q: float
    delta: float
    I_hat: float
    epsilon: float
    alpha_eff: float
    mode: Mode
    bits_per_round: float
    total_bits: int
    nsit_hat: tuple[float, float, float] | None
    nsit_epsilon: tuple[float, float, float]
    Iq: float


@dataclass(frozen=True, slots=True)
class MemoryRow:
    n: int
    total_bits: int
    mode: Mode


@dataclass(frozen=True, slots=True)
class MemoryCurve:
    rows: list[MemoryRow]
    first_positive_n: int | None
    crossing_n: int | None


def _quantum_bound(Iq: float | None) -> float:
    return get_settings().quantum_bound if Iq is None else float(Iq)


def validate_statistics(n: float, delta: float, allow_unit_delta: bool = False) -> list[str]:
    problems: list[str] = []
    if not (isinstance(n, (int, np.integer)) or float(n).is_integer()) or n < 1:
        problems.append(f"number of rounds must be a positive integer, got {n!r}")
    upper_ok = delta <= 1.0 if allow_unit_delta else delta < 1.0
    if not (math.isfinite(delta) and delta > 0.0 and upper_ok):
        bracket = "]" if allow_unit_delta else ")"
        problems.append(f"delta must lie in (0, 1{bracket}, got {delta!r}")
    return problems


# ---------------------------------------------------------------------------
# Estimator coefficients
# ---------------------------------------------------------------------------


def default_estimator(dist: SettingsDistribution) -> EstimatorSpec:
    """c = sign a b / P(x, y | pair) on pair settings; m differences single and pair frequencies."""
    dist.require_pairs()
    lgi: Coefficients = {}
    for pair in PAIRS:
        weight = dist.pair_conditional(pair)
        for a in OUTCOMES:
            for b in OUTCOMES:
                lgi[(a, b, *pair)] = LGI_SIGNS[pair] * a * b / weight

    nsit: list[Coefficients] = []
    audited = all(dist.p(s) > 0 for s in SINGLE_SETTINGS)
    for single, pair in NSIT_SETTINGS:
        coefficients: Coefficients = {}
        if audited:
            coefficients[(0, 1, *single)] = 1.0 / dist.p(single)
            for a in OUTCOMES:
                coefficients[(a, 1, *pair)] = -1.0 / dist.p(pair)
        nsit.append(coefficients)
    return EstimatorSpec(dist=dist, lgi=lgi, nsit=(nsit[0], nsit[1], nsit[2]))


def _outcome_probability(table: ProbabilityTable, setting: Setting, a: int, b: int) -> float:
    x, y = setting
    if x == 0:
        return table.singles[y][b] if a == 0 else 0.0
    return table.joint[setting][(a, b)] if a != 0 else 0.0


def _expectation(coefficients: Coefficients, table: ProbabilityTable, weights: dict) -> float:
    total = 0.0
    for (a, b, x, y), value in coefficients.items():
        total += weights[(x, y)] * value * _outcome_probability(table, (x, y), a, b)
    return total


def expected_lgi_estimator(spec: EstimatorSpec, table: ProbabilityTable) -> float:
    """Exact mean score per pair-setting round for a device with outcome table ``table``."""
    weights = {pair: spec.dist.pair_conditional(pair) for pair in PAIRS}
    return _expectation(spec.lgi, table, weights)


def expected_nsit(spec: EstimatorSpec, table: ProbabilityTable) -> tuple[float, float, float]:
    """Exact mean score per round (all settings) of each NSIT estimator."""
    spec.dist.require_audit()
    weights = dict(spec.dist.probabilities)
    return tuple(_expectation(m, table, weights) for m in spec.nsit)  # type: ignore[return-value]


def _scores(stream: TrialStream, coefficients: Coefficients) -> np.ndarray:
    scores = np.zeros(len(stream), dtype=float)
    for (a, b, x, y), value in coefficients.items():
        mask = (stream.x == x) & (stream.y == y) & (stream.a == a) & (stream.b == b)
        scores[mask] = value
    return scores


def _check_support(stream: TrialStream, dist: SettingsDistribution) -> None:
    for setting, count in stream.setting_counts().items():
        if count and dist.p(setting) <= 0:
            raise InvalidParameterError(
                f"{count} trials use setting {setting}, which has zero probability"
            )


# ---------------------------------------------------------------------------
# Estimates
# ---------------------------------------------------------------------------


def lgi_estimate(trials: TrialStream | Iterable[TrialRecord], spec: EstimatorSpec) -> float:
    """Mean estimator score over pair-setting rounds; single-setting rounds are skipped."""
    stream = TrialStream.coerce(trials)
    _check_support(stream, spec.dist)
    pair_mask = stream.x != 0
    n_pairs = int(np.count_nonzero(pair_mask))
    if n_pairs == 0:
        raise InvalidParameterError("no pair-setting trials to estimate the LGI value from")
    scores = _scores(stream, spec.lgi)
    return float(scores[pair_mask].sum() / n_pairs)


def nsit_estimates(
    trials: TrialStream | Iterable[TrialRecord],
    spec: EstimatorSpec | None = None,
) -> tuple[float, float, float]:
    """P(+|Q_j alone) minus the + marginal at Q_j from the matching pair, by frequencies."""
    stream = TrialStream.coerce(trials)
    if spec is not None:
        spec.dist.require_audit()
    counts = stream.setting_counts()
    missing = [s for s in SINGLE_SETTINGS + PAIRS if counts[s] == 0]
    if missing:
        raise InvalidParameterError(f"NSIT estimates need trials for settings {missing}")

    def plus_frequency(setting: Setting) -> float:
        mask = stream.mask(setting)
        return float(np.count_nonzero(mask & (stream.b == 1)) / counts[setting])

    return tuple(  # type: ignore[return-value]
        plus_frequency(single) - plus_frequency(pair) for single, pair in NSIT_SETTINGS
    )


def nsit_martingale_estimates(
    trials: TrialStream | Iterable[TrialRecord],
    spec: EstimatorSpec,
) -> tuple[float, float, float]:
    """Mean per-round NSIT scores, the running-sum form whose deviation nsit_deviation bounds."""
    stream = TrialStream.coerce(trials)
    spec.dist.require_audit()
    _check_support(stream, spec.dist)
    if len(stream) == 0:
        raise InvalidParameterError("no trials")
    return tuple(float(_scores(stream, m).mean()) for m in spec.nsit)  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# Confidence radii and certification
# ---------------------------------------------------------------------------


def epsilon_from_delta(n: int, delta: float, q: float, Iq: float | None = None) -> float:
    Iq = _quantum_bound(Iq)
    problems = validate_statistics(n, delta)
    if not (0.0 < q <= 1.0):
        problems.append(f"q must lie in (0, 1], got {q!r}")
    if problems:
        raise InvalidParameterError.from_problems(problems)
    return (1.0 / q + Iq) * math.sqrt(2.0 * math.log(1.0 / delta) / n)


def epsilon_crossing(
    I_hat: float, delta: float, q: float, Iq: float | None = None
) -> int | None:
    """Smallest n with eps(n) < I_hat - 1; None when there is no violation to certify."""
    Iq = _quantum_bound(Iq)
    problems = validate_statistics(1, delta)
    if not (0.0 < q <= 1.0):
        problems.append(f"q must lie in (0, 1], got {q!r}")
    if problems:
        raise InvalidParameterError.from_problems(problems)
    gap = I_hat - 1.0
    if gap <= 0:
        return None
    threshold = 2.0 * (1.0 / q + Iq) ** 2 * math.log(1.0 / delta) / gap**2
    return max(1, math.floor(threshold) + 1)


def nsit_deviation(
    n: int,
    delta: float,
    Nq: float | Sequence[float] = 0.5,
) -> tuple[float, float, float]:
    """eps_j = (1 + Nq_j) sqrt(2 ln(1/delta) / n), with the increment bound squared."""
    problems = validate_statistics(n, delta, allow_unit_delta=True)
    bounds = (Nq, Nq, Nq) if isinstance(Nq, (int, float)) else tuple(Nq)
    if len(bounds) != 3 or any(not math.isfinite(v) or v < 0 for v in bounds):
        problems.append("Nq must be one non-negative value or three of them")
    if problems:
        raise InvalidParameterError.from_problems(problems)
    radius = math.sqrt(2.0 * math.log(1.0 / delta) / n)
    return tuple((1.0 + v) * radius for v in bounds)  # type: ignore[return-value]


def nsit_frequency_radius(
    trials: TrialStream | Iterable[TrialRecord],
    delta: float,
) -> tuple[float, float, float]:
    """Two-sided Hoeffding radius of each frequency-difference NSIT estimate.

    Each of the two compared frequencies strays by more than sqrt(ln(4/delta) / (2 n_s))
    with probability at most delta/2, where n_s counts the rounds of its own setting.
    """
    stream = TrialStream.coerce(trials)
    problems = validate_statistics(1, delta, allow_unit_delta=True)
    if problems:
        raise InvalidParameterError.from_problems(problems)
    counts = stream.setting_counts()
    missing = [s for s in SINGLE_SETTINGS + PAIRS if counts[s] == 0]
    if missing:
        raise InvalidParameterError(f"NSIT estimates need trials for settings {missing}")

    scale = math.log(4.0 / delta) / 2.0
    return tuple(  # type: ignore[return-value]
        math.sqrt(scale / counts[single]) + math.sqrt(scale / counts[pair])
        for single, pair in NSIT_SETTINGS
    )


def certify(
    I_hat: float,
    n: int,
    dist: SettingsDistribution,
    delta: float,
    mode: Mode = "conditional",
    memory: bool = True,
    nsit_hat: tuple[float, float, float] | None = None,
    Iq: float | None = None,
    nsit_rounds: int | None = None,
) -> CertificationReport:
    """Certified bits after n pair rounds; memory=False drops the confidence radius.

    ``nsit_rounds`` is the round count behind the NSIT radius (all rounds, audit
    settings included); it defaults to n.
    """
    validate_mode(mode)
    problems = validate_statistics(n, delta)
    if not math.isfinite(I_hat):
        problems.append("I_hat must be finite")
    if problems:
        raise InvalidParameterError.from_problems(problems)
    dist.require_pairs()
    Iq = _quantum_bound(Iq)
    q = dist.q
    n = int(n)

    epsilon = epsilon_from_delta(n, delta, q, Iq) if memory else 0.0
    alpha_eff = I_hat - epsilon - 1.0
    if alpha_eff <= 0:
        bits_per_round = 0.0
        logger.info(f"I_hat - eps = {I_hat - epsilon:.6f} <= 1 after {n} rounds: no certified bits")
    else:
        if alpha_eff > ALPHA_MAX:
            logger.warning(f"alpha_eff = {alpha_eff:.6f} beyond the quantum maximum; clamped")
        bits_per_round = entropy(min(alpha_eff, ALPHA_MAX), mode)
    total_bits = math.floor(n * bits_per_round) if bits_per_round > 0 else 0

    return CertificationReport(
        n=n,
        q=q,
        delta=delta,
        I_hat=float(I_hat),
        epsilon=epsilon,
        alpha_eff=alpha_eff,
        mode=mode,
        bits_per_round=bits_per_round,
        total_bits=total_bits,
        nsit_hat=nsit_hat,
        nsit_epsilon=nsit_deviation(
            n if nsit_rounds is None else nsit_rounds, delta, get_settings().nsit_quantum_bound
        ),
        Iq=Iq,
    )


def certify_trials(
    trials: TrialStream | Iterable[TrialRecord],
    dist: SettingsDistribution,
    delta: float,
    mode: Mode = "conditional",
    memory: bool = True,
) -> CertificationReport:
    """Estimate I_hat (and NSIT when audited) from a trial stream, then certify its pair rounds."""
    stream = TrialStream.coerce(trials)
    spec = default_estimator(dist)
    I_hat = lgi_estimate(stream, spec)
    n_pairs = int(np.count_nonzero(stream.x != 0))
    audited = all(count > 0 for s, count in stream.setting_counts().items())
    nsit_hat = nsit_estimates(stream) if audited else None
    return certify(
        I_hat, n_pairs, dist, delta, mode, memory=memory, nsit_hat=nsit_hat,
        nsit_rounds=len(stream),
    )


def memory_curve(
    I_hat: float,
    delta: float,
    dist: SettingsDistribution,
    n_grid: Sequence[int],
    mode: Mode = "conditional",
) -> MemoryCurve:
    if len(n_grid) == 0:
        raise InvalidParameterError("n grid is empty")
    rows = [
        MemoryRow(n=int(n), total_bits=certify(I_hat, int(n), dist, delta, mode).total_bits,
                  mode=mode)
        for n in n_grid
    ]
    first_positive = next((row.n for row in rows if row.total_bits > 0), None)
    crossing = epsilon_crossing(I_hat, delta, dist.q)
    logger.debug(f"Memory curve: first positive grid n={first_positive}, crossing n={crossing}")
    return MemoryCurve(rows=rows, first_positive_n=first_positive, crossing_n=crossing)
