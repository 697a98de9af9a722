"""
KAOS goal model schemas.
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.requirement import Annotation, KaosLevel, QualityDimension


class GoalNode(BaseModel):
    """One goal in the refinement hierarchy."""
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1)
    level: KaosLevel
    text: str
    requirement_refs: List[str] = Field(default_factory=list)
    dimension: Optional[QualityDimension] = None
    rationale: str = ""
    ancestry: List[str] = Field(default_factory=list)
    annotations: List[Annotation] = Field(default_factory=list)


class GoalEdge(BaseModel):
    """Refinement link from a parent goal to a child goal."""
    model_config = ConfigDict(frozen=True)

    parent: str
    child: str
    similarity: float = Field(default=0.0, ge=0.0, le=1.0)


class KaosModel(BaseModel):
    """Goal graph over Strategic, Tactical and Operational levels."""
    model_config = ConfigDict(frozen=True)

    nodes: List[GoalNode] = Field(default_factory=list)
    edges: List[GoalEdge] = Field(default_factory=list)

    def node_map(self) -> Dict[str, GoalNode]:
        return {n.id: n for n in self.nodes}

    def texts(self) -> List[str]:
        return sorted(n.text for n in self.nodes)

    def parents_of(self, node_id: str) -> List[str]:
        return [e.parent for e in self.edges if e.child == node_id]

    def canonical(self) -> "KaosModel":
        """Nodes ordered by level then id, edges by endpoint ids."""
        nodes = sorted(self.nodes, key=lambda n: (-n.level.rank, n.id))
        edges = sorted(self.edges, key=lambda e: (e.parent, e.child))
        return KaosModel(nodes=nodes, edges=edges)


class TopologyReport(BaseModel):
    """Structural findings on a goal model; empty iff the model is valid."""
    cycles: List[List[str]] = Field(default_factory=list)
    level_inversions: List[GoalEdge] = Field(default_factory=list)
    level_skips: List[GoalEdge] = Field(default_factory=list)
    orphan_operational: List[str] = Field(default_factory=list)
    orphan_tactical: List[str] = Field(default_factory=list)
    unknown_endpoints: List[GoalEdge] = Field(default_factory=list)
    duplicate_nodes: List[str] = Field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not any((
            self.cycles,
            self.level_inversions,
            self.level_skips,
            self.orphan_operational,
            self.orphan_tactical,
            self.unknown_endpoints,
            self.duplicate_nodes,
        ))

    def summary(self) -> Dict[str, int]:
        return {
            "cycles": len(self.cycles),
            "level_inversions": len(self.level_inversions),
            "level_skips": len(self.level_skips),
            "orphan_operational": len(self.orphan_operational),
            "orphan_tactical": len(self.orphan_tactical),
            "unknown_endpoints": len(self.unknown_endpoints),
            "duplicate_nodes": len(self.duplicate_nodes),
        }


class KaosDocument(BaseModel):
    """Serialized goal model with format header."""
    format: str = "reqneg-kaos"
    version: int = 1
    model: KaosModel
