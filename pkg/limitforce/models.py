"""Records passed between services and the CLI"""
from typing import List, Optional, Dict, Any
from pydantic import BaseModel, Field, field_validator, model_validator


class Estimate(BaseModel):
    """Value of a (possibly stochastic) computation with its standard error"""
    value: float
    std_error: float = Field(0.0, ge=0.0)
    samples: int = Field(1, ge=1)
    method: str = "exact"

    @classmethod
    def exact(cls, value: float) -> "Estimate":
        return cls(value=float(value), std_error=0.0, samples=1, method="exact")

    def within(self, target: float, z: float, abs_tol: float) -> bool:
        return abs(self.value - target) <= max(abs_tol, z * self.std_error)


class ForcingReport(BaseModel):
    constraint_id: str
    target: float
    value: float
    std_error: float = 0.0
    tolerance: float
    passed: bool
    method: str = "exact"
    detail: str = ""

    @model_validator(mode="after")
    def _pass_matches_tolerance(self):
        if self.passed != (abs(self.value - self.target) <= self.tolerance):
            raise ValueError(f"pass flag inconsistent for {self.constraint_id}")
        return self


class WitnessProblem(BaseModel):
    """Perturb the (n+1)-st geometric block size by epsilon, keep power sums 1..n"""
    n: int = Field(..., ge=1)
    alpha: float = Field(..., gt=0.0, lt=1.0)
    epsilon: float

    @model_validator(mode="after")
    def _perturbed_block_inside_unit_interval(self):
        last = (1 - self.alpha) * self.alpha ** self.n
        if not 0.0 < last + self.epsilon < 1.0:
            raise ValueError(
                f"a_{self.n + 1} + epsilon = {last + self.epsilon} is outside (0, 1)"
            )
        return self

    def block_sizes(self) -> List[float]:
        return [(1 - self.alpha) * self.alpha ** i for i in range(self.n + 1)]


class WitnessResult(BaseModel):
    a: List[float]
    b: List[float]
    residuals: List[float]
    iterations: int = 0
    converged: bool = False
    epsilon: float = 0.0
    halvings: int = 0
    residual_history: List[float] = Field(default_factory=list)

    @field_validator("b")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("witness must have at least one block")
        return v


class CertificationCheck(BaseModel):
    name: str
    passed: bool
    value: float
    threshold: float
    index: Optional[Any] = None


class CertificationReport(BaseModel):
    checks: List[CertificationCheck] = Field(default_factory=list)
    power_sum_gap: float = 0.0
    predicted_gap: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


class RunConfig(BaseModel):
    command: str
    descriptor: Optional[str] = None
    seed: int = 0
    samples: int = Field(100_000, ge=1)
    tolerance: Optional[float] = None
    grid: Optional[int] = None
    resolution: int = 256
    out: Optional[str] = None
    options: Dict[str, Any] = Field(default_factory=dict)

    def header(self) -> str:
        parts = [f"command={self.command}"]
        if self.descriptor is not None:
            parts.append(f"descriptor={self.descriptor}")
        parts += [f"seed={self.seed}", f"samples={self.samples}"]
        if self.tolerance is not None:
            parts.append(f"tol={self.tolerance}")
        if self.grid is not None:
            parts.append(f"grid={self.grid}")
        parts.append(f"resolution={self.resolution}")
        for key in sorted(self.options):
            parts.append(f"{key}={self.options[key]}")
        return " ".join(parts)
