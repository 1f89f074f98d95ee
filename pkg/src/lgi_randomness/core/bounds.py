"""Closed-form certified-randomness bounds and the strategy family that saturates them.

For an LGI value of 1 + alpha with all three NSIT values zero, the largest joint
probability is P*(alpha) = (1 + alpha + sqrt(1 - 2 alpha)) / 4 and the largest
conditional probability is exactly twice that.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

from lgi_randomness.core.types import (
    MODES,
    BlochVector,
    Mode,
    PovmParams,
    Strategy,
    UnitaryParams,
)
from lgi_randomness.errors import InvalidParameterError

logger = logging.getLogger(__name__)

ALPHA_MAX = 0.5
ALPHA_TOLERANCE = 1e-12


@dataclass(frozen=True, slots=True)
class Alpha:
    """LGI excess: LGI = 1 + value."""

    value: float

    def __post_init__(self) -> None:
        problems = validate_alpha(self.value, allow_zero=True)
        if problems:
            raise InvalidParameterError.from_problems(problems)

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True, slots=True)
class BoundRow:
    alpha: float
    bits: float
    mode: Mode
    limit: bool = False


def validate_alpha(alpha: float, allow_zero: bool = False) -> list[str]:
    problems: list[str] = []
    if not math.isfinite(alpha):
        problems.append("alpha must be finite")
    elif alpha > ALPHA_MAX + ALPHA_TOLERANCE:
        problems.append(f"alpha = {alpha} exceeds the quantum maximum {ALPHA_MAX}")
    elif alpha < 0 or (alpha == 0 and not allow_zero):
        problems.append(f"alpha = {alpha} must lie in (0, {ALPHA_MAX}]")
    return problems


def alpha_value(alpha: float | Alpha, allow_zero: bool = False) -> float:
    value = float(alpha)
    problems = validate_alpha(value, allow_zero=allow_zero)
    if problems:
        raise InvalidParameterError.from_problems(problems)
    return min(value, ALPHA_MAX)


def validate_mode(mode: str) -> Mode:
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}, got {mode!r}")
    return mode  # type: ignore[return-value]


def _root(alpha: float) -> float:
    return math.sqrt(max(0.0, 1.0 - 2.0 * alpha))


def _pstar_joint(alpha: float) -> float:
    return (1.0 + alpha + _root(alpha)) / 4.0


def pstar_joint(alpha: float | Alpha) -> float:
    return _pstar_joint(alpha_value(alpha))


def entropy_joint(alpha: float | Alpha) -> float:
    return -math.log2(pstar_joint(alpha))


def pstar_conditional(alpha: float | Alpha) -> float:
    return 2.0 * pstar_joint(alpha)


def entropy_conditional(alpha: float | Alpha) -> float:
    # Clamp the -0.0 produced at the alpha -> 0 limit.
    return max(0.0, -math.log2(pstar_conditional(alpha)))


def pstar(alpha: float | Alpha, mode: Mode) -> float:
    validate_mode(mode)
    return pstar_joint(alpha) if mode == "joint" else pstar_conditional(alpha)


def entropy(alpha: float | Alpha, mode: Mode) -> float:
    validate_mode(mode)
    return entropy_joint(alpha) if mode == "joint" else entropy_conditional(alpha)


def _limit_entropy(mode: Mode) -> float:
    # alpha -> 0+: P* -> 1/2 (joint), 1 (conditional).
    return 1.0 if mode == "joint" else 0.0


def canonical_cos2z(alpha: float | Alpha) -> float:
    """cos 2z1 = cos 2z2 = (1 - sqrt(1 - 2 alpha)) / 2 for the saturating strategy."""
    value = alpha_value(alpha)
    return (1.0 - _root(value)) / 2.0


def canonical_strategy(alpha: float | Alpha) -> Strategy:
    """Maximally mixed state, a = 0, b = 1, cos t = 1 and equal rotation angles.

    Achieves LGI = 1 + alpha with all NSIT values zero and P(+,-|Q1,Q3) = P*(alpha).
    """
    z = math.acos(canonical_cos2z(alpha)) / 2.0
    return Strategy(
        state=BlochVector(0.0, 0.0, 0.0),
        u1=UnitaryParams(0.0, 0.0, z),
        u2=UnitaryParams(0.0, 0.0, z),
        povm=PovmParams(0.0, 1.0),
    )


def bound_curve(grid: Sequence[float], mode: Mode = "joint") -> list[BoundRow]:
    """Tabulate the entropy bound over ``grid``; alpha = 0 yields a labelled limit row."""
    validate_mode(mode)
    if len(grid) == 0:
        raise InvalidParameterError("alpha grid is empty")
    rows: list[BoundRow] = []
    for raw in grid:
        alpha = float(raw)
        if abs(alpha) <= ALPHA_TOLERANCE:
            rows.append(BoundRow(alpha=0.0, bits=_limit_entropy(mode), mode=mode, limit=True))
            continue
        rows.append(BoundRow(alpha=alpha, bits=entropy(alpha, mode), mode=mode))
    logger.debug(f"Tabulated {len(rows)} {mode} bound rows")
    return rows


# Maximum values of the three expressions that control the joint probabilities, under
# x + b y - b x y + k b sqrt(1 - x^2) sqrt(1 - y^2) = 1 + alpha.


def lemma_x_bound(alpha: float | Alpha) -> float:
    """Largest x (i.e. cos 2z1)."""
    value = alpha_value(alpha)
    return value + _root(value)


def lemma_by_bound(alpha: float | Alpha, b: float = 1.0) -> float:
    """Largest b y (i.e. b cos 2z2); requires b >= sqrt(2 alpha)."""
    value = alpha_value(alpha)
    slack = b * b - 2.0 * value
    if slack < -ALPHA_TOLERANCE:
        raise InvalidParameterError(f"b = {b} admits no violation alpha = {value}")
    return value + math.sqrt(max(0.0, slack))


def lemma_cross_bound(alpha: float | Alpha) -> float:
    """Largest -b - b x y + k b sqrt(1 - x^2) sqrt(1 - y^2)."""
    value = alpha_value(alpha)
    return value + _root(value) - 1.0
