"""
Verification and compliance schemas.
"""
import math
from collections import Counter
from enum import Enum
from typing import List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator


class Comparator(str, Enum):
    LE = "<="
    LT = "<"
    GE = ">="
    GT = ">"
    EQ = "="


class NumericConstraint(BaseModel):
    """A numeric bound extracted from requirement text."""
    model_config = ConfigDict(frozen=True)

    requirement_id: str
    metric: str
    comparator: Comparator
    value: float
    unit: str = Field(..., pattern=r"^(ms|s|%|count)$")
    scope: Optional[str] = None

    @field_validator("value")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("constraint value must be finite")
        return v


class LogicFinding(BaseModel):
    left_id: str
    right_id: str
    metric: str
    scope: Optional[str] = None
    detail: str


class LogicReport(BaseModel):
    """Deterministic consistency score over numeric constraints."""
    score: float = Field(..., ge=0.0, le=1.0)
    comparable_pairs: int = 0
    conflicting_pairs: int = 0
    findings: List[LogicFinding] = Field(default_factory=list)


class OverlapFinding(BaseModel):
    """Integrated requirement pair more similar than the screening threshold."""
    left_id: str
    right_id: str
    similarity: float


class ResolutionReport(BaseModel):
    """Post-integration check of the conflict registry against the integrated set.

    A conflict is unaddressed when both parties survive integration unchanged, or
    when a negotiable conflict ended in a non-terminal status. New overlaps and
    logic findings are pairs whose lineages were never registered as conflicting
    and were not already contradictory before integration.
    """
    unaddressed_conflicts: List[str] = Field(default_factory=list)
    new_overlaps: List[OverlapFinding] = Field(default_factory=list)
    new_logic_findings: List[LogicFinding] = Field(default_factory=list)

    @computed_field  # type: ignore[misc]
    @property
    def passed(self) -> bool:
        return not (self.unaddressed_conflicts or self.new_overlaps or self.new_logic_findings)


class ComplianceLabel(str, Enum):
    SATISFIED = "Satisfied"
    PARTIALLY = "Partially"
    NOT_SATISFIED = "NotSatisfied"

    @classmethod
    def parse(cls, value: str) -> "ComplianceLabel":
        key = "".join(ch for ch in value.lower() if ch.isalpha())
        aliases = {
            "satisfied": cls.SATISFIED,
            "partially": cls.PARTIALLY,
            "partial": cls.PARTIALLY,
            "partiallysatisfied": cls.PARTIALLY,
            "notsatisfied": cls.NOT_SATISFIED,
            "unsatisfied": cls.NOT_SATISFIED,
        }
        if key not in aliases:
            raise ValueError(f"unknown compliance label: {value!r}")
        return aliases[key]


def majority_label(votes: Sequence[ComplianceLabel]) -> ComplianceLabel:
    """Strict-majority label; anything else is NotSatisfied."""
    if not votes:
        return ComplianceLabel.NOT_SATISFIED
    label, count = Counter(votes).most_common(1)[0]
    if count * 2 > len(votes):
        return label
    return ComplianceLabel.NOT_SATISFIED


class ApplicabilityDecision(BaseModel):
    clause_id: str
    applicable: bool
    justification: str = ""
    stage: str = Field(..., description="tag-filter, classifier or fallback")


class ComplianceVerdict(BaseModel):
    """Entailment verdict for one applicable clause."""
    model_config = ConfigDict(frozen=True)

    clause_id: str
    label: ComplianceLabel
    best_requirement_id: Optional[str] = None
    rationale: str = ""
    citation: str = ""
    votes: List[ComplianceLabel] = Field(default_factory=list)
    error: Optional[str] = None

    @model_validator(mode="after")
    def check_majority(self) -> "ComplianceVerdict":
        if self.label is not majority_label(self.votes):
            raise ValueError("verdict label must equal the vote majority")
        return self


class HallucinationResult(BaseModel):
    requirement_id: str
    references: List[str] = Field(default_factory=list)
    skipped: bool = False
    flagged: bool = False
    nearest_clauses: List[str] = Field(default_factory=list)
    rationale: str = ""


class ComplianceReport(BaseModel):
    """Phase-4 report."""
    applicability: List[ApplicabilityDecision] = Field(default_factory=list)
    verdicts: List[ComplianceVerdict] = Field(default_factory=list)
    coverage: float = Field(..., ge=0.0, le=1.0)
    hallucinations: List[HallucinationResult] = Field(default_factory=list)
    logic: LogicReport
