"""
Pydantic models for run configuration and external fields.
"""

import logging
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import config

logger = logging.getLogger(__name__)

FIELD_KINDS = ("linear", "polynomial", "custom")


class FieldSpec(BaseModel):
    """
    External field V on [0, inf).

    ``coefficients`` are ascending powers, V(x) = sum_k coefficients[k] x^k,
    so the constant term must vanish. A ``custom`` field supplies ``function``
    (and optionally ``derivative``) as numpy-aware callables.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: str = "linear"
    coefficients: List[float] = Field(default_factory=lambda: [0.0, 1.0])
    cap: Optional[float] = None
    function: Optional[Callable] = Field(default=None, exclude=True)
    derivative: Optional[Callable] = Field(default=None, exclude=True)

    @field_validator("kind")
    @classmethod
    def kind_supported(cls, v):
        if v not in FIELD_KINDS:
            raise ValueError(f"field kind must be one of {FIELD_KINDS}, got {v!r}")
        return v

    @field_validator("cap")
    @classmethod
    def cap_positive(cls, v):
        if v is not None and not v > 0:
            raise ValueError("domain cap M must be positive")
        return v

    @model_validator(mode="after")
    def normalized_at_zero(self):
        if self.kind == "linear":
            if len(self.coefficients) != 2:
                raise ValueError("a linear field takes coefficients [0, slope]")
            if not self.coefficients[1] > 0:
                raise ValueError("a linear field needs a positive slope")
        if self.kind == "custom":
            if self.function is None:
                raise ValueError("a custom field needs a function")
            v0 = complex(self.function(0.0))
            if abs(v0) > 1e-14:
                raise ValueError(f"fields are normalized by V(0) = 0, got V(0) = {v0}")
            return self
        if not self.coefficients or self.coefficients[0] != 0:
            raise ValueError("fields are normalized by V(0) = 0; the constant coefficient must be 0")
        if all(c == 0 for c in self.coefficients):
            raise ValueError("the field must grow at infinity")
        return self

    @classmethod
    def linear(cls, slope: float = 1.0, cap: Optional[float] = None) -> "FieldSpec":
        return cls(kind="linear", coefficients=[0.0, slope], cap=cap)

    @classmethod
    def polynomial(cls, coefficients: List[float], cap: Optional[float] = None) -> "FieldSpec":
        return cls(kind="polynomial", coefficients=list(coefficients), cap=cap)

    def __call__(self, x):
        if self.kind == "custom":
            return self.function(x)
        return np.polynomial.polynomial.polyval(x, self.coefficients)

    def derivative_at(self, x):
        if self.kind == "custom":
            if self.derivative is not None:
                return self.derivative(x)
            h = 1e-6 * np.maximum(1.0, np.abs(x))
            return (self.function(x + h) - self.function(x - h)) / (2 * h)
        d = np.polynomial.polynomial.polyder(self.coefficients)
        return np.polynomial.polynomial.polyval(x, d)

    def mp_value(self, x):
        """V at an mpmath number (polynomial fields only evaluate exactly)."""
        if self.kind == "custom":
            return self.function(x)
        total = 0
        for c in reversed(self.coefficients):
            total = total * x + c
        return total

    def label(self) -> str:
        if self.kind == "custom":
            return "custom"
        terms = [f"{c:g}*x^{k}" for k, c in enumerate(self.coefficients) if c != 0]
        return " + ".join(terms)

    def check_admissible(self, upper: float = 10.0) -> bool:
        """Sufficient one-cut regularity hint: x V'(x) increasing on (0, upper)."""
        x = np.linspace(1e-3, upper, 400)
        xv = x * np.real(self.derivative_at(x))
        ok = bool(np.all(np.diff(xv) > -1e-12))
        if not ok:
            logger.warning(f"x V'(x) is not increasing for V = {self.label()}; one-cut regularity not guaranteed")
        return ok


class WeightSpec(BaseModel):
    """Weight x^alpha exp(-n V(x)) of the n-particle ensemble at theta = 1/r."""

    alpha: float = 0.0
    field: FieldSpec = Field(default_factory=FieldSpec.linear)
    n: int = 1
    r: int = 1

    @field_validator("alpha")
    @classmethod
    def alpha_range(cls, v):
        if not v > -1:
            raise ValueError(f"alpha must exceed -1, got {v}")
        return v

    @field_validator("n", "r")
    @classmethod
    def positive(cls, v):
        if v < 1:
            raise ValueError(f"n and r must be positive integers, got {v}")
        return v

    @property
    def is_linear(self) -> bool:
        return self.field.kind == "linear"

    @property
    def decay_rate(self) -> float:
        """lambda with exp(-n V(x)) <= C exp(-lambda x) on [0, inf)."""
        if self.is_linear:
            return self.n * self.field.coefficients[1]
        return self.n * float(np.real(self.field(1.0)))

    def with_n(self, n: int) -> "WeightSpec":
        return self.model_copy(update={"n": n})


class RunConfig(BaseModel):
    """Validated parameters shared by every CLI command."""

    command: str = "verify"
    r: int = 1
    alpha: float = 0.0
    bits: int = config.PRECISION_BITS
    tol: float = config.TOLERANCE
    workers: int = config.WORKERS
    out: str = config.OUTPUT_DIR
    seed: int = 0
    force: bool = False
    q: float = 1.0
    n_list: List[int] = Field(default_factory=lambda: [8, 16, 32, 48])
    x_list: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    field: FieldSpec = Field(default_factory=FieldSpec.linear)
    suite: str = "all"
    grid_size: int = config.EQ_GRID_SIZE

    @field_validator("r")
    @classmethod
    def r_positive(cls, v):
        if v < 1:
            raise ValueError(f"r must be a positive integer, got {v}")
        return v

    @field_validator("alpha")
    @classmethod
    def alpha_range(cls, v):
        if not v > -1:
            raise ValueError(f"alpha must exceed -1, got {v}")
        return v

    @field_validator("bits")
    @classmethod
    def bits_floor(cls, v):
        if v < 64:
            raise ValueError(f"precision must be at least 64 bits, got {v}")
        return v

    @field_validator("tol")
    @classmethod
    def tol_positive(cls, v):
        if not v > 0:
            raise ValueError("tolerance must be positive")
        return v

    @field_validator("workers")
    @classmethod
    def workers_positive(cls, v):
        if v < 1 and v != -1:
            raise ValueError("workers must be positive (or -1 for all cores)")
        return v

    @field_validator("q")
    @classmethod
    def q_positive(cls, v):
        if not v > 0:
            raise ValueError("q must be positive")
        return v

    @field_validator("n_list")
    @classmethod
    def n_positive(cls, v):
        if not v or any(n < 1 for n in v):
            raise ValueError("n values must be positive integers")
        return sorted(v)

    @field_validator("x_list")
    @classmethod
    def x_positive(cls, v):
        if any(x <= 0 for x in v):
            raise ValueError("kernel points must be positive")
        return v

    @model_validator(mode="after")
    def desk_scale(self):
        if self.force:
            return self
        if max(self.n_list) > config.MAX_DESK_N:
            raise ValueError(
                f"n = {max(self.n_list)} exceeds the desk-scale ceiling {config.MAX_DESK_N}; pass --force"
            )
        if self.bits > config.MAX_DESK_BITS:
            raise ValueError(
                f"{self.bits} bits exceeds the desk-scale ceiling {config.MAX_DESK_BITS}; pass --force"
            )
        return self
