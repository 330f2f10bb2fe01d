from fractions import Fraction
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings
from app.core.errors import ParameterError
from app.formats import Command, GeneratorKind, OutputFormat


def _as_fraction(value) -> Fraction:
    try:
        return Fraction(str(value))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"'{value}' is not a rational number")


def _positive_eps(value: str) -> str:
    if _as_fraction(value) <= 0:
        raise ValueError("eps must be positive")
    return value


def _check_K(eps_values: List[Fraction], K: Optional[int]) -> None:
    if K is None:
        return
    from app.services.trp_core import choose_parameters

    for eps in eps_values:
        try:
            choose_parameters(eps, K)
        except ParameterError as exc:
            raise ValueError(str(exc))


class RunConfig(BaseModel):
    """Everything one command-line invocation needs."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    command: Command
    paths: List[str] = []
    eps: List[Fraction] = Field(default_factory=lambda: [settings.EPS])
    K: Optional[int] = None
    portals: Optional[int] = Field(default=None, ge=1)
    retries: int = Field(default=settings.RETRIES, ge=1)
    seed: int = settings.SEED
    oracle: bool = False
    format: OutputFormat = OutputFormat.PLAIN
    time_limit: Optional[float] = Field(default=None, gt=0)
    mem_limit: Optional[int] = Field(default=None, gt=0)
    workers: int = Field(default=settings.WORKERS, ge=1)
    timing: bool = False
    output: Optional[str] = None
    scale: bool = False
    # gen
    generator: Optional[GeneratorKind] = None
    n: Optional[int] = Field(default=None, ge=1)
    k: Optional[int] = Field(default=None, ge=1)
    max_weight: Optional[int] = Field(default=None, ge=1)
    span: Optional[int] = Field(default=None, ge=1)
    max_p: Optional[int] = Field(default=None, ge=1)
    max_w: Optional[int] = Field(default=None, ge=1)
    # bench
    suite: Optional[str] = None
    seeds: int = Field(default=1, ge=1)

    @field_validator("eps", mode="before")
    @classmethod
    def parse_eps(cls, value):
        values = value if isinstance(value, (list, tuple)) else [value]
        out = [_as_fraction(v) for v in values]
        if not out or any(e <= 0 for e in out):
            raise ValueError("eps must be positive")
        return out

    @model_validator(mode="after")
    def check_combination(self):
        _check_K(self.eps, self.K)
        if self.command != Command.BENCH and len(self.eps) > 1:
            raise ValueError(f"{self.command.value} takes a single eps")
        if self.command in (Command.SOLVE_TRP, Command.SOLVE_SCHED, Command.ORACLE) and len(self.paths) != 1:
            raise ValueError(f"{self.command.value} needs exactly one instance path")
        if self.command == Command.GEN and self.generator is None:
            raise ValueError("gen needs a generator kind")
        if self.command == Command.BENCH and not self.suite:
            raise ValueError("bench needs --suite")
        return self

    @property
    def generator_params(self) -> dict:
        names = ("n", "k", "max_weight", "span", "max_p", "max_w")
        return {name: getattr(self, name) for name in names if getattr(self, name) is not None}


# --------------------------------------------------------------------------- #
# HTTP bodies
# --------------------------------------------------------------------------- #

class SolveTrpRequest(BaseModel):
    instance: str
    eps: str = "1"
    K: Optional[int] = None
    portals: Optional[int] = Field(default=None, ge=1)
    retries: Optional[int] = Field(default=None, ge=1)
    seed: int = settings.SEED
    oracle: bool = False
    scale: bool = False

    @field_validator("eps")
    @classmethod
    def positive_eps(cls, value: str) -> str:
        return _positive_eps(value)

    @model_validator(mode="after")
    def check_K(self):
        _check_K([Fraction(self.eps)], self.K)
        return self


class SolveSchedRequest(BaseModel):
    instance: str
    eps: str = "1"
    K: Optional[int] = None
    oracle: bool = False

    @field_validator("eps")
    @classmethod
    def positive_eps(cls, value: str) -> str:
        return _positive_eps(value)

    @model_validator(mode="after")
    def check_K(self):
        _check_K([Fraction(self.eps)], self.K)
        return self


class OracleRequest(BaseModel):
    instance: str


class GenerateRequest(BaseModel):
    seed: int = settings.SEED
    n: Optional[int] = Field(default=None, ge=1)
    k: Optional[int] = Field(default=None, ge=1)
    max_weight: Optional[int] = Field(default=None, ge=1)
    span: Optional[int] = Field(default=None, ge=1)
    max_p: Optional[int] = Field(default=None, ge=1)
    max_w: Optional[int] = Field(default=None, ge=1)


class WindowModel(BaseModel):
    index: int
    target: int
    value: str


class SolveResponse(BaseModel):
    kind: str
    n: int
    eps: str
    K: int
    h0: int
    gamma: int
    bound: str
    realized: str
    oracle: Optional[str] = None
    ratio: Optional[float] = None
    windows: List[WindowModel]
    diagnostics: List[str] = []
    solution: str


class OracleResponse(BaseModel):
    kind: str
    n: int
    optimum: str
    solution: str


class GenerateResponse(BaseModel):
    kind: str
    instance: str
