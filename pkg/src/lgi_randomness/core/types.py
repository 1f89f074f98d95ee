"""Core types shared by the model, certification and simulation layers."""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field, fields
from typing import Literal

import numpy as np

from lgi_randomness.errors import InvalidParameterError

Mode = Literal["joint", "conditional"]
Pair = tuple[int, int]
Setting = tuple[int, int]

PAIRS: tuple[Pair, ...] = ((1, 2), (1, 3), (2, 3))
SINGLE_SETTINGS: tuple[Setting, ...] = ((0, 2), (0, 3))
ALL_SETTINGS: tuple[Setting, ...] = PAIRS + SINGLE_SETTINGS
OUTCOMES: tuple[int, int] = (1, -1)
MODES: tuple[Mode, ...] = ("joint", "conditional")

# Sign of each two-time correlator in the LGI expression.
LGI_SIGNS: dict[Pair, int] = {(1, 2): 1, (2, 3): 1, (1, 3): -1}

FLAT_KEYS: tuple[str, ...] = ("nx", "ny", "nz", "x1", "y1", "z1", "x2", "y2", "z2", "a", "b")

BLOCH_TOLERANCE = 1e-12
POVM_TOLERANCE = 1e-12


def wrap_angle(value: float) -> float:
    """Map an angle onto [-pi, pi]."""
    return math.remainder(float(value), 2.0 * math.pi)


def validate_bloch(nx: float, ny: float, nz: float) -> list[str]:
    problems: list[str] = []
    if not all(math.isfinite(v) for v in (nx, ny, nz)):
        problems.append("Bloch components must be finite")
        return problems
    radius_sq = nx * nx + ny * ny + nz * nz
    if radius_sq > 1.0 + BLOCH_TOLERANCE:
        problems.append(f"Bloch vector length {math.sqrt(radius_sq):.12g} exceeds 1")
    return problems


def validate_povm(a: float, b: float) -> list[str]:
    problems: list[str] = []
    if not (math.isfinite(a) and math.isfinite(b)):
        problems.append("POVM parameters must be finite")
        return problems
    if b < 0:
        problems.append("POVM strength b must be non-negative")
    if b > 1.0 + POVM_TOLERANCE:
        problems.append("POVM strength b must be <= 1")
    if abs(a) + b > 1.0 + POVM_TOLERANCE:
        problems.append(f"|a| + b = {abs(a) + b:.12g} exceeds 1")
    return problems


@dataclass(frozen=True, slots=True)
class BlochVector:
    nx: float = 0.0
    ny: float = 0.0
    nz: float = 0.0

    def __post_init__(self) -> None:
        problems = validate_bloch(self.nx, self.ny, self.nz)
        if problems:
            raise InvalidParameterError.from_problems(problems)

    @property
    def radius(self) -> float:
        return math.sqrt(self.nx**2 + self.ny**2 + self.nz**2)


@dataclass(frozen=True, slots=True)
class UnitaryParams:
    """Angles of one unitary; normalized to [-pi, pi] on construction."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self) -> None:
        for name in ("x", "y", "z"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidParameterError(f"unitary angle {name} must be finite")
            object.__setattr__(self, name, wrap_angle(value))


@dataclass(frozen=True, slots=True)
class PovmParams:
    """Diagonal two-outcome measurement M± = ((1±a)I ± b σz)/2."""

    a: float = 0.0
    b: float = 1.0

    def __post_init__(self) -> None:
        problems = validate_povm(self.a, self.b)
        if problems:
            raise InvalidParameterError.from_problems(problems)


@dataclass(frozen=True, slots=True)
class Strategy:
    state: BlochVector = field(default_factory=BlochVector)
    u1: UnitaryParams = field(default_factory=UnitaryParams)
    u2: UnitaryParams = field(default_factory=UnitaryParams)
    povm: PovmParams = field(default_factory=PovmParams)

    def to_flat(self) -> dict[str, float]:
        return {
            "nx": self.state.nx,
            "ny": self.state.ny,
            "nz": self.state.nz,
            "x1": self.u1.x,
            "y1": self.u1.y,
            "z1": self.u1.z,
            "x2": self.u2.x,
            "y2": self.u2.y,
            "z2": self.u2.z,
            "a": self.povm.a,
            "b": self.povm.b,
        }

    @classmethod
    def from_flat(cls, data: Mapping[str, float]) -> Strategy:
        missing = [key for key in FLAT_KEYS if key not in data]
        if missing:
            raise InvalidParameterError(f"strategy is missing keys: {', '.join(missing)}")
        return cls(
            state=BlochVector(float(data["nx"]), float(data["ny"]), float(data["nz"])),
            u1=UnitaryParams(float(data["x1"]), float(data["y1"]), float(data["z1"])),
            u2=UnitaryParams(float(data["x2"]), float(data["y2"]), float(data["z2"])),
            povm=PovmParams(float(data["a"]), float(data["b"])),
        )

    def replace(self, **changes: float) -> Strategy:
        unknown = set(changes) - set(FLAT_KEYS)
        if unknown:
            raise InvalidParameterError(f"unknown strategy parameters: {sorted(unknown)}")
        flat = self.to_flat()
        flat.update(changes)
        return Strategy.from_flat(flat)


@dataclass(frozen=True, slots=True)
class StrategyBatch:
    """Column-wise parameters of many strategies, for vectorized evaluation."""

    nx: np.ndarray
    ny: np.ndarray
    nz: np.ndarray
    x1: np.ndarray
    y1: np.ndarray
    z1: np.ndarray
    x2: np.ndarray
    y2: np.ndarray
    z2: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __len__(self) -> int:
        return int(np.asarray(self.nx).shape[0])

    def columns(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def validate(self) -> list[str]:
        problems: list[str] = []
        radius_sq = self.nx**2 + self.ny**2 + self.nz**2
        if np.any(radius_sq > 1.0 + BLOCH_TOLERANCE):
            problems.append("some Bloch vectors exceed unit length")
        if np.any(self.b < 0) or np.any(self.b > 1.0 + POVM_TOLERANCE):
            problems.append("some POVM strengths lie outside [0, 1]")
        if np.any(np.abs(self.a) + self.b > 1.0 + POVM_TOLERANCE):
            problems.append("some POVMs have |a| + b > 1")
        return problems

    def strategy(self, index: int) -> Strategy:
        return Strategy.from_flat({key: float(col[index]) for key, col in self.columns().items()})

    @classmethod
    def from_strategies(cls, strategies: Iterable[Strategy]) -> StrategyBatch:
        flats = [s.to_flat() for s in strategies]
        return cls(**{key: np.array([f[key] for f in flats], dtype=float) for key in FLAT_KEYS})

    @classmethod
    def repeat(cls, strategy: Strategy, n: int) -> StrategyBatch:
        flat = strategy.to_flat()
        return cls(**{key: np.full(n, flat[key], dtype=float) for key in FLAT_KEYS})


@dataclass(frozen=True, slots=True)
class DerivedQuantities:
    gamma: float
    t: float
    chi: float
    xi: float


@dataclass(frozen=True, slots=True)
class ProbabilityTable:
    """Joint, single and correlator values for one strategy (or one data set).

    ``joint[pair][(a, b)]`` is P(a, b | Q_i, Q_j); ``singles[i][a]`` is P(a | Q_i) measured
    without earlier measurements. ``counts`` is only filled for empirical tables.
    """

    joint: dict[Pair, dict[tuple[int, int], float]]
    singles: dict[int, dict[int, float]]
    correlators: dict[Pair, float]
    lgi: float
    nsit: tuple[float, float, float]
    counts: dict[Setting, int] | None = None

    def p(self, pair: Pair, a: int, b: int) -> float:
        return self.joint[pair][(a, b)]

    def entries(self) -> Iterator[tuple[Pair, int, int, float]]:
        for pair in PAIRS:
            for a in OUTCOMES:
                for b in OUTCOMES:
                    yield pair, a, b, self.joint[pair][(a, b)]


@dataclass(frozen=True, slots=True)
class SettingsDistribution:
    """Probabilities P(x, y) over measurement settings; x = 0 means no earlier measurement."""

    probabilities: dict[Setting, float]

    def __post_init__(self) -> None:
        problems = validate_distribution(self.probabilities)
        if problems:
            raise InvalidParameterError.from_problems(problems)
        normalized = {s: float(self.probabilities.get(s, 0.0)) for s in ALL_SETTINGS}
        object.__setattr__(self, "probabilities", normalized)

    def p(self, setting: Setting) -> float:
        return self.probabilities.get(setting, 0.0)

    @property
    def pair_mass(self) -> float:
        return sum(self.probabilities[s] for s in PAIRS)

    def pair_conditional(self, setting: Setting) -> float:
        """P(x, y) renormalized over the three LGI pair settings."""
        mass = self.pair_mass
        if mass <= 0:
            raise InvalidParameterError("distribution has no mass on pair settings")
        return self.probabilities[setting] / mass

    @property
    def q(self) -> float:
        return min(self.pair_conditional(s) for s in PAIRS)

    def require_pairs(self) -> None:
        missing = [s for s in PAIRS if self.probabilities[s] <= 0]
        if missing:
            raise InvalidParameterError(
                f"certification needs positive probability on pair settings; missing {missing}"
            )

    def require_audit(self) -> None:
        missing = [s for s in SINGLE_SETTINGS if self.probabilities[s] <= 0]
        if missing:
            raise InvalidParameterError(
                f"NSIT auditing needs single-measurement settings; missing {missing}"
            )

    @classmethod
    def uniform(cls, audit_mass: float = 0.0) -> SettingsDistribution:
        return cls.biased(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, audit_mass=audit_mass)

    @classmethod
    def biased(
        cls,
        p12: float,
        p23: float,
        p13: float,
        audit_mass: float = 0.0,
    ) -> SettingsDistribution:
        """Pair weights in LGI order (t1,t2), (t2,t3), (t1,t3); rescaled by 1 - audit_mass."""
        if not 0.0 <= audit_mass < 1.0:
            raise InvalidParameterError("audit_mass must lie in [0, 1)")
        total = p12 + p23 + p13
        if total <= 0 or min(p12, p23, p13) < 0:
            raise InvalidParameterError("pair weights must be non-negative with positive sum")
        scale = (1.0 - audit_mass) / total
        return cls(
            {
                (1, 2): p12 * scale,
                (2, 3): p23 * scale,
                (1, 3): p13 * scale,
                (0, 2): audit_mass / 2.0,
                (0, 3): audit_mass / 2.0,
            }
        )


def validate_distribution(probabilities: Mapping[Setting, float]) -> list[str]:
    problems: list[str] = []
    for setting, value in probabilities.items():
        if setting not in ALL_SETTINGS:
            problems.append(f"invalid setting {setting}")
        elif not math.isfinite(value) or value < 0:
            problems.append(f"probability of {setting} must be a non-negative number")
    if problems:
        return problems
    total = math.fsum(probabilities.values())
    if abs(total - 1.0) > 1e-12:
        problems.append(f"setting probabilities sum to {total!r}, not 1")
    return problems


@dataclass(frozen=True, slots=True)
class TrialRecord:
    """One experimental round: settings (x, y) and outcomes (a, b); a is None when x = 0."""

    index: int
    x: int
    y: int
    a: int | None
    b: int

    def __post_init__(self) -> None:
        problems = validate_trial(self.x, self.y, self.a, self.b)
        if problems:
            raise InvalidParameterError.from_problems(problems)

    @property
    def setting(self) -> Setting:
        return (self.x, self.y)


def validate_trial(x: int, y: int, a: int | None, b: int) -> list[str]:
    problems: list[str] = []
    if (x, y) not in ALL_SETTINGS:
        problems.append(f"invalid setting ({x}, {y})")
    if b not in OUTCOMES:
        problems.append(f"outcome b must be +1 or -1, got {b!r}")
    if x == 0 and a is not None:
        problems.append("outcome a must be absent when x = 0")
    if x != 0 and a not in OUTCOMES:
        problems.append(f"outcome a must be +1 or -1 when x != 0, got {a!r}")
    return problems


@dataclass(frozen=True, slots=True)
class TrialStream:
    """Columnar trial records; ``a`` holds 0 where the outcome is absent."""

    index: np.ndarray
    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __len__(self) -> int:
        return int(self.index.shape[0])

    def __iter__(self) -> Iterator[TrialRecord]:
        for i, x, y, a, b in zip(
            self.index.tolist(), self.x.tolist(), self.y.tolist(), self.a.tolist(), self.b.tolist()
        ):
            yield TrialRecord(i, x, y, a if x != 0 else None, b)

    def mask(self, setting: Setting) -> np.ndarray:
        return (self.x == setting[0]) & (self.y == setting[1])

    def setting_counts(self) -> dict[Setting, int]:
        return {s: int(np.count_nonzero(self.mask(s))) for s in ALL_SETTINGS}

    @classmethod
    def from_records(cls, records: Iterable[TrialRecord]) -> TrialStream:
        rows = [(r.index, r.x, r.y, r.a or 0, r.b) for r in records]
        if not rows:
            empty = np.zeros(0, dtype=np.int64)
            return cls(empty, empty.astype(np.int8), empty.astype(np.int8),
                       empty.astype(np.int8), empty.astype(np.int8))
        arr = np.array(rows, dtype=np.int64)
        return cls(
            index=arr[:, 0],
            x=arr[:, 1].astype(np.int8),
            y=arr[:, 2].astype(np.int8),
            a=arr[:, 3].astype(np.int8),
            b=arr[:, 4].astype(np.int8),
        )

    @classmethod
    def coerce(cls, trials: TrialStream | Iterable[TrialRecord]) -> TrialStream:
        if isinstance(trials, TrialStream):
            return trials
        return cls.from_records(trials)

    @classmethod
    def concat(cls, parts: list[TrialStream]) -> TrialStream:
        if not parts:
            return cls.from_records([])
        return cls(
            index=np.concatenate([p.index for p in parts]),
            x=np.concatenate([p.x for p in parts]),
            y=np.concatenate([p.y for p in parts]),
            a=np.concatenate([p.a for p in parts]),
            b=np.concatenate([p.b for p in parts]),
        )
