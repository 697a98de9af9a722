"""
Integration service: deduplication, decomposition, escalation handling and goal-model stitching.
"""
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.core import prompts as P
from app.core.app_logging import integration_logger, log_error
from app.core.config import RunConfig
from app.core.exceptions import DecodeError, IntegrationError, InvalidArgumentError, ProviderError
from app.schemas.conflict import ConflictKind, ConflictRegistry, ConflictStatus, NegotiationTrace
from app.schemas.kaos import GoalEdge, GoalNode, KaosModel, TopologyReport
from app.schemas.provider import ChatRequest
from app.schemas.requirement import Annotation, KaosLevel, QualityDimension, Requirement, RequirementSet
from app.schemas.verification import OverlapFinding, ResolutionReport
from app.services.ai_service import BaseProvider, cosine
from app.services.constraint_service import extract_constraints, logic_check
from app.services.coordinator_service import detect_overlaps, pairwise_similarities
from app.services.metrics_service import project_quality
from app.services.negotiation_service import aggregate_objective
from app.services.topology_service import repair, validate_dag
from app.utils.json_utils import extract_json


STITCH_CANDIDATES = 3
ROOT_STRATEGIC_ID = "ROOT-SG0"
ROOT_TACTICAL_ID = "ROOT-TG0"
ROOT_STRATEGIC_TEXT = "The system shall meet the quality objectives of all stakeholders."
ROOT_TACTICAL_TEXT = "The system shall realise its strategic quality goals through coordinated tactical measures."
REVISION_SUFFIX = ".r"


class MergeRecord(BaseModel):
    """Requirements folded into a survivor by deduplication."""
    survivor_id: str
    removed_ids: List[str]


class EscalationDecision(BaseModel):
    """Priority-weighted outcome of one escalated conflict."""
    conflict_id: str
    retained_id: str
    demoted_id: str
    retained_score: float
    demoted_score: float
    weights: List[float]


class IntegrationResult(BaseModel):
    requirements: RequirementSet
    model: KaosModel
    merges: List[MergeRecord] = Field(default_factory=list)
    decisions: List[EscalationDecision] = Field(default_factory=list)
    topology_before: TopologyReport
    topology_after: TopologyReport
    resolution: ResolutionReport = Field(default_factory=ResolutionReport)


def _pair(a: str, b: str) -> Tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def _survivor_key(r: Requirement) -> Tuple[int, str]:
    return (-len(r.rationale), r.id)


def _absorb(survivor: Requirement, removed: Sequence[Requirement], kind: str) -> Requirement:
    """Fold removed requirements into the survivor's ancestry and annotations."""
    ancestry = list(survivor.ancestry)
    annotations = list(survivor.annotations)
    for r in removed:
        for rid in [r.id] + list(r.ancestry):
            if rid not in ancestry and rid != survivor.id:
                ancestry.append(rid)
        annotations.append(Annotation(kind=kind, text=r.description, source_id=r.id))  # type: ignore[arg-type]
        annotations.extend(r.annotations)
    return survivor.model_copy(update={"ancestry": ancestry, "annotations": annotations})


async def deduplicate(
    requirement_set: RequirementSet,
    tau_dup: float,
    provider: BaseProvider,
    registry: Optional[ConflictRegistry] = None,
) -> Tuple[RequirementSet, List[MergeRecord]]:
    """Merge Redundant pairs and pairs more similar than tau_dup.

    Pairs registered as negotiable conflicts are never merged, and their
    parties are never removed.
    """
    if not 0.0 < tau_dup < 1.0:
        raise InvalidArgumentError(f"tau_dup must lie in (0, 1), got {tau_dup}")

    redundant: Set[Tuple[str, str]] = set()
    blocked: Set[Tuple[str, str]] = set()
    protected: Set[str] = set()
    for conflict in (registry.conflicts if registry else []):
        pair = (conflict.left_id, conflict.right_id)
        if conflict.kind is ConflictKind.REDUNDANT:
            redundant.add(pair)
        else:
            blocked.add(pair)
            protected.update(pair)

    ordered, sims = await pairwise_similarities(requirement_set, provider)
    parent = {r.id: r.id for r in ordered}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            pair = _pair(ordered[i].id, ordered[j].id)
            if pair in blocked:
                continue
            if pair in redundant or float(sims[i, j]) > tau_dup:
                union(*pair)

    groups: Dict[str, List[Requirement]] = {}
    for r in ordered:
        groups.setdefault(find(r.id), []).append(r)

    replacements: Dict[str, Requirement] = {}
    removed_ids: Set[str] = set()
    merges: List[MergeRecord] = []
    for members in groups.values():
        if len(members) < 2:
            continue
        keepers = [m for m in members if m.id in protected]
        survivor = min(keepers or members, key=_survivor_key)
        folded = [m for m in members if m.id != survivor.id and m.id not in protected]
        if not folded:
            continue
        replacements[survivor.id] = _absorb(survivor, folded, "merged")
        removed_ids.update(m.id for m in folded)
        merges.append(MergeRecord(survivor_id=survivor.id, removed_ids=sorted(m.id for m in folded)))
        integration_logger.info(f"Deduplicated {sorted(m.id for m in folded)} into {survivor.id}")

    kept = [
        replacements.get(r.id, r)
        for r in requirement_set.requirements
        if r.id not in removed_ids
    ]
    merges.sort(key=lambda m: m.survivor_id)
    return RequirementSet(requirements=kept, phase_label=requirement_set.phase_label), merges


def apply_decompositions(requirement_set: RequirementSet, trace: NegotiationTrace) -> RequirementSet:
    """Replace each Consensus focal requirement by its decomposition children."""
    requirements = list(requirement_set.requirements)
    decomposed: Set[str] = set()

    for proposal in trace.proposals:
        index = next((i for i, r in enumerate(requirements) if r.id == proposal.focal_id), None)
        if index is None:
            if proposal.focal_id in decomposed:
                integration_logger.warning(
                    f"{proposal.focal_id} already decomposed; ignoring proposal of {proposal.conflict_id}"
                )
                continue
            raise IntegrationError(f"focal requirement {proposal.focal_id} of {proposal.conflict_id} is missing")

        focal = requirements[index]
        try:
            dimension = QualityDimension.parse(proposal.proposer)
        except ValueError:
            dimension = focal.dimension

        if proposal.decomposition:
            drafts = [(d.suffix, d.text, focal.level.below()) for d in proposal.decomposition]
            rationale = f"Decomposition of {focal.id} agreed in {proposal.conflict_id}."
        else:
            drafts = [(REVISION_SUFFIX, proposal.proposed_text, focal.level)]
            rationale = f"Revision of {focal.id} agreed in {proposal.conflict_id}."

        existing = {r.id for r in requirements}
        children = []
        for suffix, text, level in drafts:
            child_id = f"{focal.id}{suffix}"
            if child_id in existing:
                raise IntegrationError(f"decomposition id {child_id} collides with an existing requirement")
            children.append(Requirement(
                id=child_id,
                description=text,
                dimension=dimension,
                level=level,
                rationale=rationale,
                source_agent=dimension.value,
                phase_of_origin=3,
                ancestry=[focal.id],
                annotations=list(focal.annotations),
            ))

        requirements[index:index + 1] = children
        decomposed.add(focal.id)
        integration_logger.info(f"Replaced {focal.id} with {[c.id for c in children]}")

    return RequirementSet(requirements=requirements, phase_label=requirement_set.phase_label)


async def resolve_escalated(
    requirement_set: RequirementSet,
    registry: ConflictRegistry,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> Tuple[RequirementSet, List[EscalationDecision]]:
    """Keep the side with the higher weighted objective; the other becomes a constraint annotation."""
    requirements = {r.id: r for r in requirement_set.requirements}
    order = [r.id for r in requirement_set.requirements]
    decisions: List[EscalationDecision] = []

    for conflict in registry.with_status(ConflictStatus.ESCALATED):
        left = requirements.get(conflict.left_id)
        right = requirements.get(conflict.right_id)
        if left is None or right is None:
            integration_logger.info(f"{conflict.conflict_id}: a party was already integrated, nothing to resolve")
            continue

        left_score = aggregate_objective(
            await project_quality(left.description, config, provider, seed), config.weights
        )
        right_score = aggregate_objective(
            await project_quality(right.description, config, provider, seed), config.weights
        )
        if left_score >= right_score:
            retained, demoted, kept_score, lost_score = left, right, left_score, right_score
        else:
            retained, demoted, kept_score, lost_score = right, left, right_score, left_score

        requirements[retained.id] = _absorb(retained, [demoted], "constraint")
        del requirements[demoted.id]
        decisions.append(EscalationDecision(
            conflict_id=conflict.conflict_id,
            retained_id=retained.id,
            demoted_id=demoted.id,
            retained_score=kept_score,
            demoted_score=lost_score,
            weights=list(config.weights),
        ))
        integration_logger.info(
            f"{conflict.conflict_id}: retained {retained.id} ({kept_score:.4f}) over {demoted.id} ({lost_score:.4f})"
        )

    kept = [requirements[i] for i in order if i in requirements]
    return RequirementSet(requirements=kept, phase_label=requirement_set.phase_label), decisions


def _node(r: Requirement) -> GoalNode:
    return GoalNode(
        id=r.id,
        level=r.level,
        text=r.description,
        requirement_refs=[r.id],
        dimension=r.dimension,
        rationale=r.rationale,
        ancestry=list(r.ancestry),
        annotations=list(r.annotations),
    )


def goal_nodes(requirement_set: RequirementSet) -> List[GoalNode]:
    """One node per requirement plus synthetic roots for missing upper levels."""
    nodes = [_node(r) for r in requirement_set.requirements]
    levels = {n.level for n in nodes}
    if KaosLevel.STRATEGIC not in levels:
        nodes.append(GoalNode(id=ROOT_STRATEGIC_ID, level=KaosLevel.STRATEGIC, text=ROOT_STRATEGIC_TEXT))
        integration_logger.info("No strategic goal present; added a synthetic root")
    if KaosLevel.OPERATIONAL in levels and KaosLevel.TACTICAL not in levels:
        nodes.append(GoalNode(id=ROOT_TACTICAL_ID, level=KaosLevel.TACTICAL, text=ROOT_TACTICAL_TEXT))
        integration_logger.info("No tactical goal present; added a bridging goal")
    return nodes


def _goal_record(node: GoalNode) -> str:
    return f"{node.id} | {node.level.value} | {' '.join(node.text.split())}"


def build_stitch_request(child: GoalNode, candidates: List[GoalNode], config: RunConfig, seed: int) -> ChatRequest:
    lines = [f"{P.CHILD_MARKER} {_goal_record(child)}"]
    lines += [f"{P.CANDIDATE_MARKER} {_goal_record(c)}" for c in candidates]
    return ChatRequest(
        system_prompt=P.STITCH_SYSTEM_PROMPT,
        user_prompt="\n".join(lines),
        temperature=0.0,
        max_tokens=config.max_tokens,
        seed=seed,
        task=P.Task.STITCH,
        persona=P.MODERATOR_PERSONA,
    )


def _parse_parent_ids(raw: str) -> List[str]:
    data = extract_json(raw)
    if isinstance(data, dict):
        data = data.get("parent_ids", [])
    if not isinstance(data, list):
        raise DecodeError("parent_ids must be a list")
    return [str(x) for x in data]


async def stitch(
    requirement_set: RequirementSet,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> KaosModel:
    """Link every Tactical and Operational goal to parents one level up."""
    nodes = goal_nodes(requirement_set)
    vectors = await provider.embed([n.text for n in nodes])
    embedding = {n.id: np.asarray(v.values, dtype=float) for n, v in zip(nodes, vectors)}

    def similarity(a: GoalNode, b: GoalNode) -> float:
        return min(1.0, max(0.0, cosine(embedding[a.id], embedding[b.id])))

    by_level: Dict[KaosLevel, List[GoalNode]] = {level: [] for level in KaosLevel}
    for node in nodes:
        by_level[node.level].append(node)

    edges: List[GoalEdge] = []
    for child in sorted(nodes, key=lambda n: n.id):
        parent_level = child.level.above()
        if parent_level is None:
            continue
        pool = by_level[parent_level]
        ranked = sorted(pool, key=lambda c: (-similarity(c, child), c.id))[:STITCH_CANDIDATES]
        if not ranked:
            continue

        chosen: List[GoalNode] = []
        if len(ranked) > 1:
            try:
                raw = await provider.chat(build_stitch_request(child, ranked, config, seed))
                pool_ids = {c.id: c for c in pool}
                chosen = [pool_ids[pid] for pid in dict.fromkeys(_parse_parent_ids(raw)) if pid in pool_ids]
            except ProviderError as e:
                log_error(e, {"task": P.Task.STITCH, "child": child.id})
                integration_logger.warning(f"Stitching {child.id} fell back to the nearest candidate")
        if not chosen:
            chosen = ranked[:1]

        for parent in chosen:
            edges.append(GoalEdge(parent=parent.id, child=child.id, similarity=similarity(parent, child)))

    return KaosModel(nodes=nodes, edges=edges).canonical()


def _lineage(r: Requirement) -> Set[str]:
    return {r.id, *r.ancestry}


async def validate_resolution(
    source: RequirementSet,
    integrated: RequirementSet,
    registry: ConflictRegistry,
    config: RunConfig,
    provider: BaseProvider,
) -> ResolutionReport:
    """Check that every registered conflict was settled and that integration introduced no new contradictions.

    ``source`` is the set integration started from. A pair of integrated requirements
    is already known when some member of one lineage was paired with some member of
    the other, either in the registry or in the logic findings of ``source``.
    Requirements sharing an origin, such as decomposition siblings, are never compared.
    """
    present = set(integrated.ids())
    unaddressed = []
    for conflict in registry.conflicts:
        settled = conflict.status.is_terminal or not conflict.kind.negotiable
        retired = conflict.left_id not in present or conflict.right_id not in present
        if not (settled and retired):
            unaddressed.append(conflict.conflict_id)

    known: Set[FrozenSet[str]] = {frozenset((c.left_id, c.right_id)) for c in registry.conflicts}
    known.update(
        frozenset((f.left_id, f.right_id))
        for f in logic_check(extract_constraints(source)).findings
    )
    lineages = {r.id: _lineage(r) for r in integrated.requirements}

    def is_new(a: str, b: str) -> bool:
        la, lb = lineages[a], lineages[b]
        if la & lb:
            return False
        return not any(frozenset((x, y)) in known for x in la for y in lb)

    overlaps = [
        OverlapFinding(left_id=c.left_id, right_id=c.right_id, similarity=c.similarity)
        for c in await detect_overlaps(integrated, config.tau_overlap, provider)
        if is_new(c.left_id, c.right_id)
    ]
    logic_findings = [
        f for f in logic_check(extract_constraints(integrated)).findings
        if is_new(f.left_id, f.right_id)
    ]

    report = ResolutionReport(
        unaddressed_conflicts=sorted(unaddressed),
        new_overlaps=overlaps,
        new_logic_findings=logic_findings,
    )
    if report.passed:
        integration_logger.info("Resolution validated: every conflict settled, no new contradictions")
    else:
        integration_logger.warning(
            f"Resolution validation: {len(report.unaddressed_conflicts)} unaddressed conflict(s), "
            f"{len(overlaps)} new overlap(s), {len(logic_findings)} new logic finding(s)"
        )
    return report


async def run_phase3(
    requirement_set: RequirementSet,
    registry: ConflictRegistry,
    trace: NegotiationTrace,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> IntegrationResult:
    """Deduplicate, apply agreed decompositions, settle escalations, build a valid goal model and validate the outcome."""
    deduped, merges = await deduplicate(requirement_set, config.tau_dup, provider, registry)
    decomposed = apply_decompositions(deduped, trace)
    resolved, decisions = await resolve_escalated(decomposed, registry, config, provider, seed)
    integrated = resolved.relabel(3)

    model = await stitch(integrated, config, provider, seed)
    before = validate_dag(model)
    if not before.is_empty:
        integration_logger.warning(f"Stitched model has structural findings: {before.summary()}")
        vectors = await provider.embed([n.text for n in model.nodes])
        embedding = {n.id: v.values for n, v in zip(model.nodes, vectors)}
        model = repair(
            model,
            before,
            scorer=lambda parent, child: cosine(embedding[parent.id], embedding[child.id]),
        )
    after = validate_dag(model)
    resolution = await validate_resolution(requirement_set, integrated, registry, config, provider)

    integration_logger.info(
        f"Integration produced {len(integrated)} requirement(s), {len(model.nodes)} goal(s), {len(model.edges)} edge(s)"
    )
    return IntegrationResult(
        requirements=integrated,
        model=model,
        merges=merges,
        decisions=decisions,
        topology_before=before,
        topology_after=after,
        resolution=resolution,
    )
