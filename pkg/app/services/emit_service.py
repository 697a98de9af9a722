"""
Emit service: KAOS JSON, GSN XML and markdown report rendering.
"""
from typing import Dict, List, Optional, Tuple

from lxml import etree
from pydantic import ValidationError

from app.core import prompts as P
from app.core.app_logging import pipeline_logger
from app.core.config import RunConfig
from app.core.exceptions import ExportError
from app.schemas.conflict import ConflictRegistry, NegotiationTrace
from app.schemas.kaos import GoalEdge, GoalNode, KaosDocument, KaosModel, TopologyReport
from app.schemas.metrics import MetricsReport
from app.schemas.provider import ChatRequest
from app.schemas.requirement import Annotation, KaosLevel, QualityDimension
from app.schemas.verification import ComplianceLabel, ComplianceReport, ResolutionReport
from app.services.ai_service import BaseProvider
from app.services.negotiation_service import render_trace_markdown
from app.services.topology_service import validate_dag
from app.utils.json_utils import dumps_canonical
from app.utils.text_utils import xml_safe


KAOS_FORMAT = "reqneg-kaos"
GSN_NAMESPACE = "urn:reqneg:gsn:1.0"
GSN_VERSION = "1"
_NS = f"{{{GSN_NAMESPACE}}}"


def _require_valid(model: KaosModel) -> None:
    report = validate_dag(model)
    if not report.is_empty:
        raise ExportError(f"refusing to export an invalid goal model: {report.summary()}")


def annotate_model(model: KaosModel, compliance: Optional[ComplianceReport] = None) -> KaosModel:
    """Attach verification findings to the goal nodes they concern."""
    if compliance is None:
        return model

    extra: Dict[str, List[Annotation]] = {}
    for h in compliance.hallucinations:
        if h.flagged:
            extra.setdefault(h.requirement_id, []).append(Annotation(
                kind="hallucination",
                text=h.rationale or f"unsupported references: {', '.join(h.references)}",
                source_id=h.requirement_id,
            ))
    for v in compliance.verdicts:
        if v.best_requirement_id and v.label is not ComplianceLabel.NOT_SATISFIED:
            extra.setdefault(v.best_requirement_id, []).append(Annotation(
                kind="compliance",
                text=f"{v.label.value} {v.clause_id}: {v.citation}",
                source_id=v.clause_id,
            ))

    nodes = []
    for node in model.nodes:
        merged = list(node.annotations)
        for a in extra.get(node.id, []):
            if a not in merged:
                merged.append(a)
        nodes.append(node.model_copy(update={"annotations": merged}))
    return KaosModel(nodes=nodes, edges=list(model.edges))


def export_kaos_json(model: KaosModel, compliance: Optional[ComplianceReport] = None) -> str:
    """Deterministic KAOS JSON document; refuses invalid models."""
    _require_valid(model)
    document = KaosDocument(format=KAOS_FORMAT, model=annotate_model(model, compliance).canonical())
    return dumps_canonical(document)


def load_kaos_json(text: str) -> KaosModel:
    try:
        document = KaosDocument.model_validate_json(text)
    except ValidationError as e:
        raise ExportError(f"not a KAOS document: {e}") from e
    if document.format != KAOS_FORMAT:
        raise ExportError(f"unexpected document format {document.format!r}")
    return document.model


def export_gsn_xml(model: KaosModel) -> str:
    """GSN XML: Goal elements, SupportedBy links and Justifications in context."""
    _require_valid(model)
    model = model.canonical()

    root = etree.Element(_NS + "AssuranceCase", nsmap={"gsn": GSN_NAMESPACE})
    root.set("version", GSN_VERSION)

    for node in model.nodes:
        goal = etree.SubElement(root, _NS + "Goal")
        goal.set("id", node.id)
        goal.set("level", node.level.value)
        if node.dimension is not None:
            goal.set("dimension", node.dimension.value)
        statement = etree.SubElement(goal, _NS + "Statement")
        statement.text = xml_safe(node.text)

    for node in model.nodes:
        if not node.rationale:
            continue
        justification_id = f"J-{node.id}"
        justification = etree.SubElement(root, _NS + "Justification")
        justification.set("id", justification_id)
        statement = etree.SubElement(justification, _NS + "Statement")
        statement.text = xml_safe(node.rationale)
        link = etree.SubElement(root, _NS + "InContextOf")
        link.set("source", node.id)
        link.set("target", justification_id)

    for edge in model.edges:
        link = etree.SubElement(root, _NS + "SupportedBy")
        link.set("source", edge.parent)
        link.set("target", edge.child)
        link.set("similarity", f"{edge.similarity:.6f}")

    return etree.tostring(root, pretty_print=True, xml_declaration=True, encoding="UTF-8").decode("utf-8")


def load_gsn_xml(text: str) -> KaosModel:
    """Rebuild goals and refinement links from a GSN XML document."""
    try:
        root = etree.fromstring(text.encode("utf-8"))
    except etree.XMLSyntaxError as e:
        raise ExportError(f"malformed GSN XML: {e}") from e
    if root.tag != _NS + "AssuranceCase":
        raise ExportError(f"unexpected root element {root.tag}")

    justifications = {
        j.get("id"): j.findtext(_NS + "Statement") or ""
        for j in root.iter(_NS + "Justification")
    }
    rationale = {
        link.get("source"): justifications.get(link.get("target"), "")
        for link in root.iter(_NS + "InContextOf")
    }

    nodes = []
    for goal in root.iter(_NS + "Goal"):
        goal_id = goal.get("id")
        dimension = goal.get("dimension")
        nodes.append(GoalNode(
            id=goal_id,
            level=KaosLevel(goal.get("level")),
            text=goal.findtext(_NS + "Statement") or "",
            dimension=QualityDimension(dimension) if dimension else None,
            rationale=rationale.get(goal_id, ""),
        ))
    edges = [
        GoalEdge(
            parent=link.get("source"),
            child=link.get("target"),
            similarity=float(link.get("similarity", "0")),
        )
        for link in root.iter(_NS + "SupportedBy")
    ]
    return KaosModel(nodes=nodes, edges=edges)


def _level_counts(model: KaosModel) -> List[Tuple[str, int]]:
    return [(level.value, sum(1 for n in model.nodes if n.level is level)) for level in KaosLevel]


def export_report(
    case: str,
    seed: int,
    model: KaosModel,
    trace: NegotiationTrace,
    registry: Optional[ConflictRegistry] = None,
    topology: Optional[TopologyReport] = None,
    resolution: Optional[ResolutionReport] = None,
    compliance: Optional[ComplianceReport] = None,
    metrics: Optional[MetricsReport] = None,
) -> str:
    """Human-readable run report."""
    lines = [f"# Requirements report: {case} (seed {seed})", ""]

    lines += ["## Negotiation", ""]
    if registry is not None:
        lines.append(
            f"Conflicts detected: {len(registry)}; negotiated: {len(registry.negotiable())}; "
            f"rounds: {trace.total_rounds}; steps: {trace.total_steps}."
        )
        lines.append("")
    if not trace.events:
        lines += ["No conflicts detected.", ""]
    else:
        lines.append(render_trace_markdown(trace, registry))

    lines += ["## Goal model", "", "| Level | Goals |", "|---|---|"]
    lines += [f"| {level} | {count} |" for level, count in _level_counts(model)]
    lines += ["", f"Refinement links: {len(model.edges)}", ""]
    if topology is not None:
        lines += ["| Finding | Count |", "|---|---|"]
        lines += [f"| {name} | {count} |" for name, count in topology.summary().items()]
        lines.append("")

    if resolution is not None:
        lines += ["## Resolution validation", ""]
        if resolution.passed:
            lines += ["Every registered conflict was settled and integration introduced no new contradictions.", ""]
        else:
            if resolution.unaddressed_conflicts:
                lines += [f"Unaddressed conflicts: {', '.join(resolution.unaddressed_conflicts)}", ""]
            lines += [
                f"- New overlap {o.left_id}~{o.right_id} (similarity {o.similarity:.4f})"
                for o in resolution.new_overlaps
            ]
            lines += [f"- New logic finding: {f.detail}" for f in resolution.new_logic_findings]
            lines.append("")

    if compliance is not None:
        lines += [
            "## Compliance",
            "",
            f"Coverage: {compliance.coverage:.3f} over {len(compliance.verdicts)} applicable clause(s). "
            f"S_logic: {compliance.logic.score:.3f}.",
            "",
        ]
        if compliance.verdicts:
            lines += ["| Clause | Label | Votes | Evidence | Citation |", "|---|---|---|---|---|"]
            for v in compliance.verdicts:
                votes = ", ".join(label.value for label in v.votes)
                citation = v.citation.replace("|", "\\|")
                lines.append(f"| {v.clause_id} | {v.label.value} | {votes} | {v.best_requirement_id or '-'} | {citation} |")
            lines.append("")
        flagged = [h for h in compliance.hallucinations if h.flagged]
        if flagged:
            lines += ["Unsupported standard references:", ""]
            lines += [f"- {h.requirement_id}: {', '.join(h.references)}" for h in flagged]
            lines.append("")

    if metrics is not None:
        lines += ["## Metrics", "", "| Metric | Value |", "|---|---|"]
        lines += [f"| {name} | {value:.4f} |" for name, value in sorted(metrics.scalars().items())]
        lines.append("")

    return "\n".join(lines).rstrip("\n") + "\n"


async def generate_downstream_materials(
    model: KaosModel,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> str:
    """Test-case outlines and architecture notes derived from the goal model."""
    goals = [n for n in model.canonical().nodes if n.level in (KaosLevel.OPERATIONAL, KaosLevel.STRATEGIC)]
    request = ChatRequest(
        system_prompt=P.MATERIALS_SYSTEM_PROMPT,
        user_prompt="\n".join(
            f"{P.REQUIREMENT_MARKER} {n.id} | {n.level.value} | {' '.join(n.text.split())}" for n in goals
        ),
        temperature=config.temperature,
        max_tokens=config.max_tokens,
        seed=seed,
        task=P.Task.MATERIALS,
        persona=P.MODERATOR_PERSONA,
    )
    text = await provider.chat(request)
    pipeline_logger.info(f"Generated downstream materials for {len(goals)} goal(s)")
    return text.rstrip("\n") + "\n"
