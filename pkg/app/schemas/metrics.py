"""
Evaluation metric schemas.
"""
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator


class AxisCounts(BaseModel):
    """Requirements per quality axis."""
    counts: Tuple[int, int, int, int, int]

    @field_validator("counts")
    @classmethod
    def validate_non_negative(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(n < 0 for n in v):
            raise ValueError("axis counts must be non-negative")
        return v

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def mean(self) -> float:
        return self.total / len(self.counts)


class MatchPair(BaseModel):
    """One assignment; None marks a dummy slot."""
    index_a: Optional[int] = None
    index_b: Optional[int] = None
    similarity: float = 0.0


class PreservationScore(BaseModel):
    score: float = Field(..., ge=0.0, le=1.0)
    matching: List[MatchPair] = Field(default_factory=list)


class Iso29148Scores(BaseModel):
    """Judge scores on a 1 to 5 scale."""
    unambiguous: float = Field(..., ge=1.0, le=5.0)
    correctness: float = Field(..., ge=1.0, le=5.0)
    verifiability: float = Field(..., ge=1.0, le=5.0)
    set_consistency: float = Field(..., ge=1.0, le=5.0)
    set_feasibility: float = Field(..., ge=1.0, le=5.0)
    terminology: float = Field(..., ge=1.0, le=5.0)


class PhasePreservation(BaseModel):
    phase_a: int
    phase_b: int
    score: float = Field(..., ge=0.0, le=1.0)


class MetricsReport(BaseModel):
    """All scalar metrics of one (case, seed) run."""
    case: str
    seed: int
    requirement_counts: Dict[str, int] = Field(default_factory=dict)
    axis_counts: AxisCounts
    chv: float
    chv_degenerate: bool
    mdc: float
    cu: float
    mac: int
    crr: float
    s_logic: float
    compliance_coverage: float
    conflicts_detected: int = 0
    conflicts_negotiated: int = 0
    negotiation_steps: int = 0
    negotiation_rounds: int = 0
    preservation: List[PhasePreservation] = Field(default_factory=list)
    iso29148: Optional[Iso29148Scores] = None

    def scalars(self) -> Dict[str, float]:
        """Flat numeric view used for seed averaging."""
        values: Dict[str, float] = {
            "requirements": float(self.axis_counts.total),
            "chv": self.chv,
            "mdc": self.mdc,
            "cu": self.cu,
            "mac": float(self.mac),
            "crr": self.crr,
            "s_logic": self.s_logic,
            "compliance_coverage": self.compliance_coverage,
            "conflicts_detected": float(self.conflicts_detected),
            "negotiation_steps": float(self.negotiation_steps),
        }
        for p in self.preservation:
            values[f"preservation_p{p.phase_b}_vs_p{p.phase_a}"] = p.score
        if self.iso29148 is not None:
            for name, score in self.iso29148.model_dump().items():
                values[f"iso29148_{name}"] = score
        return values


class RunSummary(BaseModel):
    """Seed-averaged metrics for one case."""
    case: str
    seeds: List[int]
    means: Dict[str, float]
    runs: List[MetricsReport] = Field(default_factory=list)
