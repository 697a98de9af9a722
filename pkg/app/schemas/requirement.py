"""
Requirement related Pydantic schemas.
"""
import hashlib
from enum import Enum
from typing import Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator


class QualityDimension(str, Enum):
    """Quality axes, in axis order."""
    SAFETY = "Safety"
    EFFICIENCY = "Efficiency"
    SUSTAINABILITY = "Sustainability"
    TRUSTWORTHINESS = "Trustworthiness"
    RESPONSIBILITY = "Responsibility"

    @property
    def axis(self) -> int:
        """Zero-based axis index in quality space."""
        return list(QualityDimension).index(self)

    @property
    def prefix(self) -> str:
        """Requirement id prefix of the agent owning this axis."""
        return _DIMENSION_PREFIXES[self]

    @classmethod
    def parse(cls, value: str) -> "QualityDimension":
        """Parse a dimension from its name, case-insensitively."""
        key = value.strip().lower()
        for dim in cls:
            if dim.value.lower() == key or dim.name.lower() == key:
                return dim
        if key == "trust":
            return cls.TRUSTWORTHINESS
        raise ValueError(f"unknown quality dimension: {value!r}")


_DIMENSION_PREFIXES = {
    QualityDimension.SAFETY: "S",
    QualityDimension.EFFICIENCY: "E",
    QualityDimension.SUSTAINABILITY: "G",
    QualityDimension.TRUSTWORTHINESS: "T",
    QualityDimension.RESPONSIBILITY: "R",
}


class KaosLevel(str, Enum):
    """KAOS goal levels, ordered Strategic > Tactical > Operational."""
    STRATEGIC = "Strategic"
    TACTICAL = "Tactical"
    OPERATIONAL = "Operational"

    @property
    def rank(self) -> int:
        return {"Strategic": 3, "Tactical": 2, "Operational": 1}[self.value]

    @property
    def prefix(self) -> str:
        return {"Strategic": "SG", "Tactical": "TG", "Operational": "OG"}[self.value]

    def below(self) -> "KaosLevel":
        """Next level down, floored at Operational."""
        if self is KaosLevel.STRATEGIC:
            return KaosLevel.TACTICAL
        return KaosLevel.OPERATIONAL

    def above(self) -> Optional["KaosLevel"]:
        if self is KaosLevel.OPERATIONAL:
            return KaosLevel.TACTICAL
        if self is KaosLevel.TACTICAL:
            return KaosLevel.STRATEGIC
        return None

    @classmethod
    def parse(cls, value: str) -> "KaosLevel":
        """Parse a level from its name or id prefix."""
        key = value.strip().lower()
        for level in cls:
            if key in (level.value.lower(), level.prefix.lower()):
                return level
        raise ValueError(f"unknown KAOS level: {value!r}")


class Annotation(BaseModel):
    """Structural annotation attached to a requirement or goal."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["constraint", "merged", "hallucination", "compliance"]
    text: str
    source_id: Optional[str] = None


class Requirement(BaseModel):
    """One atomic requirement."""
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1, description="Hierarchical id, e.g. S-TG2")
    description: str
    dimension: QualityDimension
    level: KaosLevel
    rationale: str = ""
    source_agent: str = Field(..., description="Identifier of the producing agent")
    phase_of_origin: int = Field(..., ge=1, le=5)
    ancestry: List[str] = Field(default_factory=list, description="Prior requirement ids")
    annotations: List[Annotation] = Field(default_factory=list)


class RequirementSet(BaseModel):
    """Ordered requirement collection produced by one phase."""
    model_config = ConfigDict(frozen=True)

    requirements: List[Requirement] = Field(default_factory=list)
    phase_label: int = Field(..., ge=0, le=5)

    def __len__(self) -> int:
        return len(self.requirements)

    def ids(self) -> List[str]:
        return [r.id for r in self.requirements]

    def descriptions(self) -> List[str]:
        return [r.description for r in self.requirements]

    def by_id(self) -> Dict[str, Requirement]:
        return {r.id: r for r in self.requirements}

    def get(self, requirement_id: str) -> Optional[Requirement]:
        return self.by_id().get(requirement_id)

    def relabel(self, phase_label: int) -> "RequirementSet":
        """Same requirements under another phase label."""
        return RequirementSet(requirements=list(self.requirements), phase_label=phase_label)

    def digest(self) -> str:
        """Order-independent content digest."""
        h = hashlib.sha256()
        for r in sorted(self.requirements, key=lambda r: r.id):
            h.update(f"{r.id}\x1f{r.description}\x1e".encode("utf-8"))
        return h.hexdigest()[:16]


class QualityVector(BaseModel):
    """Point in the five-dimensional quality space."""
    model_config = ConfigDict(frozen=True)

    components: Tuple[float, float, float, float, float]

    @field_validator("components")
    @classmethod
    def validate_range(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        """Every component lies in [0, 1]."""
        for c in v:
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"quality component out of range: {c}")
        return v

    @classmethod
    def clamped(cls, values: Sequence[float]) -> "QualityVector":
        return cls(components=tuple(min(1.0, max(0.0, float(x))) for x in values))  # type: ignore[arg-type]


class DanglingReference(BaseModel):
    requirement_id: str
    missing_id: str


class ValidationReport(BaseModel):
    """Findings of requirement-set validation; empty iff the set is valid."""
    duplicate_ids: List[str] = Field(default_factory=list)
    empty_descriptions: List[str] = Field(default_factory=list)
    dangling_ancestry: List[DanglingReference] = Field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not (self.duplicate_ids or self.empty_descriptions or self.dangling_ancestry)


class CaseProject(BaseModel):
    """A project description fed to the generation agents."""
    name: str = Field(..., min_length=1)
    description: str = Field(..., min_length=1)
    domain_tags: List[str] = Field(default_factory=list)


def validate_requirement_set(
    requirement_set: RequirementSet,
    history: Sequence[RequirementSet] = (),
) -> ValidationReport:
    """Report duplicate ids, empty descriptions and dangling ancestry refs.

    Ancestry ids may resolve against earlier-phase sets passed in ``history``.
    """
    seen: Dict[str, int] = {}
    for r in requirement_set.requirements:
        seen[r.id] = seen.get(r.id, 0) + 1
    duplicates = sorted(i for i, n in seen.items() if n > 1)

    empty = [r.id for r in requirement_set.requirements if not r.description.strip()]

    known = set(seen)
    for earlier in history:
        known.update(earlier.ids())
    dangling = [
        DanglingReference(requirement_id=r.id, missing_id=a)
        for r in requirement_set.requirements
        for a in r.ancestry
        if a not in known
    ]

    return ValidationReport(
        duplicate_ids=duplicates,
        empty_descriptions=empty,
        dangling_ancestry=dangling,
    )
