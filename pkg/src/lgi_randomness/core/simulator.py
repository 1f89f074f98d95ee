"""Reproducible Monte Carlo trial streams and grouped bit outputs.

Rounds are generated in fixed-size chunks. Chunk c draws from a Philox generator keyed
by ``SeedSequence(seed, spawn_key=(c,))``, so a stream depends only on the seed, the
chunk size, the schedule, the distribution and n; never on how many workers ran it.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from lgi_randomness.config import get_settings
from lgi_randomness.core.qubit import (
    closed_form_batch,
    correlators_from_joint,
    lgi_from_correlators,
    nsit_from_probabilities,
)
from lgi_randomness.core.types import (
    ALL_SETTINGS,
    FLAT_KEYS,
    OUTCOMES,
    PAIRS,
    ProbabilityTable,
    Setting,
    SettingsDistribution,
    Strategy,
    StrategyBatch,
    TrialRecord,
    TrialStream,
)
from lgi_randomness.errors import InvalidParameterError

logger = logging.getLogger(__name__)

GroupKey = tuple[int, int, int | None]

# The eight configurations: two first outcomes per pair, plus the two unblocked runs.
GROUP_KEYS: tuple[GroupKey, ...] = tuple(
    (x, y, a) for (x, y) in PAIRS for a in OUTCOMES
) + ((0, 2, None), (0, 3, None))


@dataclass(frozen=True, slots=True)
class DriftSchedule:
    """Base strategy plus an optional sinusoidal drift of one parameter over rounds."""

    base: Strategy
    parameter: str | None = None
    amplitude: float = 0.0
    period: float = 1.0

    def __post_init__(self) -> None:
        problems: list[str] = []
        if self.parameter is not None and self.parameter not in FLAT_KEYS:
            problems.append(f"unknown drift parameter {self.parameter!r}")
        if not math.isfinite(self.amplitude) or self.amplitude < 0:
            problems.append("drift amplitude must be non-negative")
        if not math.isfinite(self.period) or self.period <= 0:
            problems.append("drift period must be positive")
        if problems:
            raise InvalidParameterError.from_problems(problems)
        if not self.is_static:
            # The sinusoid reaches both extremes; both must stay valid.
            value = self.base.to_flat()[self.parameter]
            for extreme in (value - self.amplitude, value + self.amplitude):
                self.base.replace(**{self.parameter: extreme})

    @property
    def is_static(self) -> bool:
        return self.parameter is None or self.amplitude == 0.0

    def strategies(self, start: int, stop: int) -> StrategyBatch:
        """Realized strategies for rounds [start, stop)."""
        batch = StrategyBatch.repeat(self.base, stop - start)
        if self.is_static:
            return batch
        rounds = np.arange(start, stop, dtype=float)
        columns = batch.columns()
        columns[self.parameter] = columns[self.parameter] + self.amplitude * np.sin(
            2.0 * np.pi * rounds / self.period
        )
        return StrategyBatch(**columns)

    def strategy_at(self, index: int) -> Strategy:
        return self.strategies(index, index + 1).strategy(0)

    @classmethod
    def static(cls, strategy: Strategy) -> DriftSchedule:
        return cls(base=strategy)


@dataclass(frozen=True, slots=True)
class BitOutput:
    """Output bits grouped by configuration (x, y, a); b = +1 is written as '0'."""

    groups: dict[GroupKey, str]
    rounds_per_second: float = field(default_factory=lambda: get_settings().rounds_per_second)

    @property
    def lengths(self) -> dict[GroupKey, int]:
        return {key: len(bits) for key, bits in self.groups.items()}

    @property
    def total_length(self) -> int:
        return sum(self.lengths.values())

    @property
    def generation_seconds(self) -> float:
        return self.total_length / self.rounds_per_second

    @staticmethod
    def file_name(key: GroupKey) -> str:
        """``bits_x{x}_y{y}_a{a}.txt`` with a = 1, -1, or 0 for the unblocked runs."""
        x, y, a = key
        return f"bits_x{x}_y{y}_a{0 if a is None else a}.txt"


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _chunk_generator(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _sample_chunk(
    schedule: DriftSchedule,
    dist: SettingsDistribution,
    start: int,
    stop: int,
    seed: int,
    chunk: int,
) -> TrialStream:
    size = stop - start
    rng = _chunk_generator(seed, chunk)
    u_setting = rng.random(size)
    u_first = rng.random(size)
    u_second = rng.random(size)

    cumulative = np.cumsum([dist.p(s) for s in ALL_SETTINGS])
    cumulative[-1] = 1.0
    choice = np.searchsorted(cumulative, u_setting, side="right")
    choice = np.minimum(choice, len(ALL_SETTINGS) - 1)
    settings = np.array(ALL_SETTINGS, dtype=np.int8)
    x = settings[choice, 0]
    y = settings[choice, 1]

    cf = closed_form_batch(schedule.strategies(start, stop))
    a = np.zeros(size, dtype=np.int8)
    b = np.zeros(size, dtype=np.int8)
    with np.errstate(divide="ignore", invalid="ignore"):
        for index, (sx, sy) in enumerate(ALL_SETTINGS):
            mask = choice == index
            if not np.any(mask):
                continue
            if sx == 0:
                plus = np.broadcast_to(cf.singles[sy][1], (size,))[mask]
                b[mask] = np.where(u_second[mask] < plus, 1, -1)
                continue
            block = {k: np.broadcast_to(v, (size,))[mask] for k, v in cf.joint[(sx, sy)].items()}
            first_plus = block[(1, 1)] + block[(1, -1)]
            first = np.where(u_first[mask] < first_plus, 1, -1)
            marginal = np.where(first == 1, first_plus, 1.0 - first_plus)
            joint_plus = np.where(first == 1, block[(1, 1)], block[(-1, 1)])
            second_plus = np.where(marginal > 0, joint_plus / marginal, 0.0)
            a[mask] = first
            b[mask] = np.where(u_second[mask] < second_plus, 1, -1)

    logger.debug(f"Sampled chunk {chunk}: rounds {start}..{stop - 1}")
    return TrialStream(index=np.arange(start, stop, dtype=np.int64), x=x, y=y, a=a, b=b)


def _sample_chunk_packed(args: tuple) -> TrialStream:
    return _sample_chunk(*args)


def sample_trials(
    schedule: DriftSchedule | Strategy,
    dist: SettingsDistribution,
    n: int,
    seed: int = 0,
    chunk_size: int | None = None,
    workers: int | None = None,
) -> TrialStream:
    """Draw n rounds: settings from ``dist``, outcomes from the exact qubit model."""
    if n < 1:
        raise InvalidParameterError("number of rounds must be at least 1")
    if isinstance(schedule, Strategy):
        schedule = DriftSchedule.static(schedule)
    settings = get_settings()
    chunk_size = chunk_size or settings.chunk_size
    workers = workers or settings.workers
    if chunk_size < 1:
        raise InvalidParameterError("chunk size must be at least 1")

    tasks = [
        (schedule, dist, start, min(n, start + chunk_size), seed, chunk)
        for chunk, start in enumerate(range(0, n, chunk_size))
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sample_chunk_packed, tasks))
    else:
        parts = [_sample_chunk_packed(task) for task in tasks]

    stream = TrialStream.concat(parts)
    logger.info(f"Sampled {len(stream)} trials in {len(tasks)} chunks (seed={seed})")
    return stream


# ---------------------------------------------------------------------------
# Folding trials
# ---------------------------------------------------------------------------


def empirical_table(trials: TrialStream | Iterable[TrialRecord]) -> ProbabilityTable:
    """Frequency table. Singles at t2/t3 come from the unblocked settings and are NaN
    (as is NSIT) when those settings were never run; t1 singles pool the pair rounds."""
    stream = TrialStream.coerce(trials)
    counts = stream.setting_counts()
    missing = [pair for pair in PAIRS if counts[pair] == 0]
    if missing:
        raise InvalidParameterError(f"no trials observed for pair settings {missing}")

    joint: dict = {}
    for pair in PAIRS:
        mask = stream.mask(pair)
        joint[pair] = {
            (a, b): float(
                np.count_nonzero(mask & (stream.a == a) & (stream.b == b)) / counts[pair]
            )
            for a in OUTCOMES
            for b in OUTCOMES
        }

    first_rounds = stream.x == 1
    first_plus = float(
        np.count_nonzero(first_rounds & (stream.a == 1)) / np.count_nonzero(first_rounds)
    )
    singles: dict[int, dict[int, float]] = {1: {1: first_plus, -1: 1.0 - first_plus}}
    for time in (2, 3):
        setting: Setting = (0, time)
        if counts[setting]:
            plus = float(np.count_nonzero(stream.mask(setting) & (stream.b == 1)) / counts[setting])
        else:
            plus = math.nan
        singles[time] = {1: plus, -1: 1.0 - plus}

    correlators = correlators_from_joint(joint)
    return ProbabilityTable(
        joint=joint,
        singles=singles,
        correlators=correlators,
        lgi=lgi_from_correlators(correlators),
        nsit=nsit_from_probabilities(joint, singles[2][1], singles[3][1]),
        counts=counts,
    )


def bits_from_trials(
    trials: TrialStream | Iterable[TrialRecord],
    rounds_per_second: float | None = None,
) -> BitOutput:
    """One bit per round from the last outcome, grouped by (x, y, a)."""
    stream = TrialStream.coerce(trials)
    groups: dict[GroupKey, str] = {}
    for key in GROUP_KEYS:
        x, y, a = key
        mask = (stream.x == x) & (stream.y == y) & (stream.a == (0 if a is None else a))
        bits = (stream.b[mask] == -1).astype(np.uint8) + ord("0")
        groups[key] = bits.tobytes().decode("ascii")
    if rounds_per_second is None:
        return BitOutput(groups=groups)
    if rounds_per_second <= 0:
        raise InvalidParameterError("rounds per second must be positive")
    return BitOutput(groups=groups, rounds_per_second=rounds_per_second)
