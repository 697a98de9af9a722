"""
Conflict and negotiation related Pydantic schemas.
"""
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.exceptions import InvalidArgumentError
from app.schemas.requirement import KaosLevel


class ConflictKind(str, Enum):
    """Classification of a flagged requirement pair."""
    REDUNDANT = "Redundant"
    RESOURCE_BOUND = "ResourceBound"
    LOGICAL_INCOMPATIBILITY = "LogicalIncompatibility"

    @property
    def weight(self) -> float:
        """Severity multiplier."""
        return {
            "Redundant": 0.3,
            "ResourceBound": 0.8,
            "LogicalIncompatibility": 1.0,
        }[self.value]

    @property
    def negotiable(self) -> bool:
        """Redundant pairs go straight to deduplication."""
        return self is not ConflictKind.REDUNDANT

    @classmethod
    def parse(cls, value: str) -> "ConflictKind":
        key = "".join(ch for ch in value.lower() if ch.isalpha())
        aliases = {
            "redundant": cls.REDUNDANT,
            "redundancy": cls.REDUNDANT,
            "resourcebound": cls.RESOURCE_BOUND,
            "resourceboundconflict": cls.RESOURCE_BOUND,
            "logicalincompatibility": cls.LOGICAL_INCOMPATIBILITY,
            "logical": cls.LOGICAL_INCOMPATIBILITY,
        }
        if key not in aliases:
            raise ValueError(f"unknown conflict kind: {value!r}")
        return aliases[key]


class ConflictStatus(str, Enum):
    """Resolution status; Consensus and Escalated are terminal."""
    UNRESOLVED = "Unresolved"
    PARTIAL = "Partial"
    CONSENSUS = "Consensus"
    ESCALATED = "Escalated"

    @property
    def is_terminal(self) -> bool:
        return self in (ConflictStatus.CONSENSUS, ConflictStatus.ESCALATED)

    @property
    def progress(self) -> int:
        return {"Unresolved": 0, "Partial": 1, "Consensus": 2, "Escalated": 2}[self.value]

    def transition(self, target: "ConflictStatus") -> "ConflictStatus":
        """Move to ``target``; raises on regression or from a terminal state."""
        if self.is_terminal:
            if target is self:
                return self
            raise InvalidArgumentError(f"{self.value} is terminal, cannot move to {target.value}")
        if target is ConflictStatus.ESCALATED or target.progress >= self.progress:
            return target
        raise InvalidArgumentError(f"status cannot regress from {self.value} to {target.value}")

    def advance(self, outcome: "ConflictStatus") -> "ConflictStatus":
        """Apply a round outcome, keeping the furthest status reached."""
        if outcome.progress < self.progress:
            return self
        return self.transition(outcome)


class Critique(BaseModel):
    """One peer critique of a thesis."""
    model_config = ConfigDict(frozen=True)

    agent: str
    text: str


class RoundRecord(BaseModel):
    """One thesis, critique and synthesis round."""
    model_config = ConfigDict(frozen=True)

    round_index: int = Field(..., ge=1)
    focus_agent: str
    thesis: str = ""
    critiques: List[Critique] = Field(default_factory=list)
    synthesis: str = ""
    similarity_to_previous: float = Field(default=0.0, ge=0.0, le=1.0)
    outcome: ConflictStatus = ConflictStatus.UNRESOLVED
    error: Optional[str] = None

    @model_validator(mode="after")
    def check_critiques(self) -> "RoundRecord":
        if self.outcome is ConflictStatus.ESCALATED:
            raise ValueError("a round outcome cannot be Escalated")
        if (
            self.error is None
            and self.outcome in (ConflictStatus.UNRESOLVED, ConflictStatus.PARTIAL)
            and not self.critiques
        ):
            raise ValueError("open rounds must carry critiques")
        return self

    @property
    def steps(self) -> int:
        """Thesis, critique and synthesis events produced by this round."""
        return int(bool(self.thesis)) + len(self.critiques) + int(bool(self.synthesis))


class DecompositionDraft(BaseModel):
    """A sub-requirement proposed during synthesis."""
    model_config = ConfigDict(frozen=True)

    suffix: str = Field(..., pattern=r"^\.[A-Za-z0-9]+$", description="Id suffix, e.g. '.1'")
    text: str = Field(..., min_length=1)
    level: KaosLevel = KaosLevel.OPERATIONAL


class SynthesisProposal(BaseModel):
    """A moderated revision proposal for one conflict."""
    model_config = ConfigDict(frozen=True)

    conflict_id: str
    proposer: str
    focal_id: str
    proposed_text: str
    decomposition: List[DecompositionDraft] = Field(default_factory=list)
    status_claim: ConflictStatus = ConflictStatus.PARTIAL

    @field_validator("status_claim")
    @classmethod
    def validate_claim(cls, v: ConflictStatus) -> ConflictStatus:
        if v is ConflictStatus.ESCALATED:
            raise ValueError("a proposal cannot claim Escalated")
        return v

    @field_validator("decomposition")
    @classmethod
    def validate_suffixes(cls, v: List[DecompositionDraft]) -> List[DecompositionDraft]:
        suffixes = [d.suffix for d in v]
        if len(set(suffixes)) != len(suffixes):
            raise ValueError(f"decomposition suffixes must be distinct: {suffixes}")
        return v


def conflict_key(left_id: str, right_id: str) -> str:
    return f"{left_id}~{right_id}"


class Conflict(BaseModel):
    """A flagged requirement pair and its negotiation history."""
    model_config = ConfigDict(frozen=True)

    left_id: str
    right_id: str
    kind: ConflictKind
    severity: float = Field(..., ge=0.0, le=1.0)
    similarity: float = Field(..., ge=0.0, le=1.0)
    rationale: str = ""
    status: ConflictStatus = ConflictStatus.UNRESOLVED
    rounds: List[RoundRecord] = Field(default_factory=list)
    resolution: Optional[SynthesisProposal] = None

    @model_validator(mode="after")
    def check_pair(self) -> "Conflict":
        if self.left_id == self.right_id:
            raise ValueError("a conflict needs two distinct requirements")
        if self.left_id > self.right_id:
            raise ValueError("conflict pairs are stored in id order")
        return self

    @property
    def conflict_id(self) -> str:
        return conflict_key(self.left_id, self.right_id)

    def sort_key(self) -> tuple:
        return (-self.severity, self.conflict_id)


class ConflictRegistry(BaseModel):
    """Conflicts ordered by descending severity, ties by pair id."""
    model_config = ConfigDict(frozen=True)

    conflicts: List[Conflict] = Field(default_factory=list)
    source_set_id: str = ""

    @field_validator("conflicts")
    @classmethod
    def validate_order(cls, v: List[Conflict]) -> List[Conflict]:
        keys = [c.sort_key() for c in v]
        if keys != sorted(keys):
            raise ValueError("registry must be sorted by severity, then pair id")
        ids = [c.conflict_id for c in v]
        if len(set(ids)) != len(ids):
            raise ValueError("registry contains duplicate pairs")
        return v

    def __len__(self) -> int:
        return len(self.conflicts)

    def get(self, conflict_id: str) -> Optional[Conflict]:
        for c in self.conflicts:
            if c.conflict_id == conflict_id:
                return c
        return None

    def negotiable(self) -> List[Conflict]:
        return [c for c in self.conflicts if c.kind.negotiable]

    def with_status(self, status: ConflictStatus) -> List[Conflict]:
        return [c for c in self.conflicts if c.status is status]


class TraceEvent(BaseModel):
    """A round record tagged with its conflict."""
    model_config = ConfigDict(frozen=True)

    conflict_id: str
    record: RoundRecord


class ScheduleEntry(BaseModel):
    """Focus order used in one global round."""
    model_config = ConfigDict(frozen=True)

    round_index: int
    focus_order: List[str]


class NegotiationTrace(BaseModel):
    """Ordered negotiation events and final statuses."""
    model_config = ConfigDict(frozen=True)

    events: List[TraceEvent] = Field(default_factory=list)
    total_steps: int = 0
    total_rounds: int = 0
    schedule: List[ScheduleEntry] = Field(default_factory=list)
    proposals: List[SynthesisProposal] = Field(default_factory=list)
    final_statuses: Dict[str, ConflictStatus] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_counts(self) -> "NegotiationTrace":
        if self.total_steps != sum(e.record.steps for e in self.events):
            raise ValueError("total_steps must count thesis, critique and synthesis events")
        if self.total_rounds != len(self.events):
            raise ValueError("total_rounds must equal the number of round records")
        return self

    def rounds_for(self, conflict_id: str) -> List[RoundRecord]:
        return [e.record for e in self.events if e.conflict_id == conflict_id]
