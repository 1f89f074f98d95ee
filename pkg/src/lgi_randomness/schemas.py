"""Pydantic wire schemas for strategy files, trial lines, results and manifests."""

from __future__ import annotations

from datetime import datetime
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from lgi_randomness.core.certification import CertificationReport
from lgi_randomness.core.optimizer import OptResult
from lgi_randomness.core.simulator import BitOutput, DriftSchedule
from lgi_randomness.core.types import (
    ALL_SETTINGS,
    SettingsDistribution,
    Strategy,
    TrialRecord,
    validate_bloch,
    validate_povm,
    validate_trial,
)

SCHEMA_VERSION = 1

Outcome = Literal[1, -1]


def setting_label(setting: tuple[int, int]) -> str:
    return f"{setting[0]}{setting[1]}"


class StrategyModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    nx: float = 0.0
    ny: float = 0.0
    nz: float = 0.0
    x1: float = 0.0
    y1: float = 0.0
    z1: float = 0.0
    x2: float = 0.0
    y2: float = 0.0
    z2: float = 0.0
    a: float = 0.0
    b: float = 1.0

    @model_validator(mode="after")
    def validate_physical(self) -> StrategyModel:
        problems = validate_bloch(self.nx, self.ny, self.nz) + validate_povm(self.a, self.b)
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def to_strategy(self) -> Strategy:
        return Strategy.from_flat(self.model_dump(exclude={"schema_version"}))

    @classmethod
    def from_strategy(cls, strategy: Strategy) -> StrategyModel:
        return cls(**strategy.to_flat())


class TrialLine(BaseModel):
    """One JSONL trial: ``{"i":..., "x":..., "y":..., "a":...|null, "b":...}``."""

    model_config = ConfigDict(extra="forbid")

    i: int = Field(ge=0)
    x: Literal[0, 1, 2]
    y: Literal[2, 3]
    a: Outcome | None = None
    b: Outcome

    @model_validator(mode="after")
    def validate_trial_shape(self) -> TrialLine:
        problems = validate_trial(self.x, self.y, self.a, self.b)
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def to_record(self) -> TrialRecord:
        return TrialRecord(index=self.i, x=self.x, y=self.y, a=self.a, b=self.b)


class DistributionModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    probabilities: dict[str, float]

    @classmethod
    def from_distribution(cls, dist: SettingsDistribution) -> DistributionModel:
        return cls(probabilities={setting_label(s): dist.p(s) for s in ALL_SETTINGS})

    def to_distribution(self) -> SettingsDistribution:
        return SettingsDistribution(
            {(int(label[0]), int(label[1])): p for label, p in self.probabilities.items()}
        )


class OptResultModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    alpha: float
    v: float
    objective: str
    target: list | None = None
    seed: int
    best_value: float
    bits: float
    best_strategy: StrategyModel
    residuals: list[float]
    restarts_used: int
    converged: bool

    @classmethod
    def from_result(cls, result: OptResult, seed: int) -> OptResultModel:
        target = result.best_target
        return cls(
            alpha=result.problem.alpha,
            v=result.problem.nsit_tolerance,
            objective=result.problem.objective,
            target=[list(target[0]), target[1], target[2]] if target else None,
            seed=seed,
            best_value=result.best_value,
            bits=result.bits,
            best_strategy=StrategyModel.from_strategy(result.best_strategy),
            residuals=list(result.residuals),
            restarts_used=result.restarts_used,
            converged=result.converged,
        )


class CertificationReportModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    n: int
    q: float
    delta: float
    I_hat: float
    epsilon: float
    alpha_eff: float
    mode: Literal["joint", "conditional"]
    bits_per_round: float
    total_bits: int
    nsit_hat: list[float] | None = None
    nsit_epsilon: list[float]
    Iq: float

    @classmethod
    def from_report(cls, report: CertificationReport) -> CertificationReportModel:
        return cls(
            n=report.n,
            q=report.q,
            delta=report.delta,
            I_hat=report.I_hat,
            epsilon=report.epsilon,
            alpha_eff=report.alpha_eff,
            mode=report.mode,
            bits_per_round=report.bits_per_round,
            total_bits=report.total_bits,
            nsit_hat=list(report.nsit_hat) if report.nsit_hat is not None else None,
            nsit_epsilon=list(report.nsit_epsilon),
            Iq=report.Iq,
        )


class DriftModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    parameter: str | None = None
    amplitude: float = 0.0
    period: float = 1.0

    @classmethod
    def from_schedule(cls, schedule: DriftSchedule) -> DriftModel:
        return cls(
            parameter=schedule.parameter, amplitude=schedule.amplitude, period=schedule.period
        )


class TrialManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    created_at: datetime
    trials_file: str
    sha256: str
    n: int
    seed: int
    chunk_size: int
    strategy: StrategyModel
    drift: DriftModel
    distribution: DistributionModel
    setting_counts: dict[str, int]


class BitGroupModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x: int
    y: int
    a: int | None
    file: str
    length: int


class BitManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    created_at: datetime
    groups: list[BitGroupModel]
    total_length: int
    rounds_per_second: float
    generation_seconds: float

    @classmethod
    def from_output(cls, output: BitOutput, created_at: datetime) -> BitManifest:
        groups = [
            BitGroupModel(x=x, y=y, a=a, file=BitOutput.file_name((x, y, a)), length=length)
            for (x, y, a), length in output.lengths.items()
        ]
        return cls(
            created_at=created_at,
            groups=groups,
            total_length=output.total_length,
            rounds_per_second=output.rounds_per_second,
            generation_seconds=output.generation_seconds,
        )


class TableDocument(BaseModel):
    """Tabular command output in JSON form."""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    command: str
    columns: list[str]
    rows: list[list[str | int | float | bool | None]]
