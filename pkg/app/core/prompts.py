"""
Prompt task names, section markers and shared prompt text.

Services build prompts from these markers and the offline providers parse
them back, so both sides must import them from here.
"""
from app.schemas.requirement import QualityDimension


class Task:
    GENERATE = "generate"
    CLASSIFY = "classify"
    THESIS = "thesis"
    CRITIQUE = "critique"
    SYNTHESIZE = "synthesize"
    PROJECT = "project"
    STITCH = "stitch"
    APPLICABILITY = "applicability"
    VERIFY = "verify"
    HALLUCINATION = "hallucination"
    JUDGE = "judge29148"
    MATERIALS = "materials"


MODERATOR_PERSONA = "Orchestrator"
JUDGE_PERSONA = "QualityJudge"
VERIFIER_PERSONA = "ComplianceVerifier"

# Section markers; each is followed by its value on the same line or by a block.
CONFLICT_MARKER = "Conflict:"
ROUND_MARKER = "Round:"
FOCAL_MARKER = "Focal requirement:"
OPPONENT_MARKER = "Opposing requirement:"
PREVIOUS_MARKER = "Previous synthesis:"
THESIS_MARKER = "Thesis:"
CRITIQUE_MARKER = "Critique from"
LEFT_MARKER = "Requirement A:"
RIGHT_MARKER = "Requirement B:"
SIMILARITY_MARKER = "Similarity:"
CHILD_MARKER = "Child goal:"
CANDIDATE_MARKER = "Candidate parent:"
CLAUSE_MARKER = "Clause:"
CLAUSE_TEXT_MARKER = "Clause text:"
EVIDENCE_MARKER = "Evidence requirement:"
REFERENCE_MARKER = "Cited reference:"
RETRIEVED_CLAUSE_MARKER = "Retrieved clause:"
PROJECT_TAGS_MARKER = "Project domain tags:"
REQUIREMENT_MARKER = "Requirement:"

FORMAT_REMINDER = (
    "Your previous answer could not be parsed. Reply with a JSON array only, "
    "one object per requirement, using exactly the fields of the output schema."
)

AXIS_RUBRICS = {
    QualityDimension.SAFETY: "Safety: prevention of harm, hazard mitigation, fail-safe behaviour.",
    QualityDimension.EFFICIENCY: "Efficiency: latency, throughput and use of compute or energy budgets.",
    QualityDimension.SUSTAINABILITY: "Sustainability: long-term resource use, maintainability and environmental impact.",
    QualityDimension.TRUSTWORTHINESS: "Trustworthiness: transparency, explainability, security and user confidence.",
    QualityDimension.RESPONSIBILITY: "Responsibility: accountability, regulatory compliance, auditability and ethics.",
}

PROJECTION_SYSTEM_PROMPT = (
    "You rate requirements in a five-dimensional quality space. "
    "Rate how directly this requirement addresses each quality axis on a scale from 0 to 1.\n"
    + "\n".join(AXIS_RUBRICS[d] for d in QualityDimension)
    + "\nAll five axes are evaluated in a single call. Reply with a JSON object with keys "
    "safety, efficiency, sustainability, trustworthiness, responsibility."
)

CLASSIFY_SYSTEM_PROMPT = (
    "You are the conflict coordinator of a requirements negotiation. Two requirements were "
    "flagged as semantically overlapping. Classify the pair as Redundant (same intent), "
    "ResourceBound (competing for a finite budget such as latency, compute or energy) or "
    "LogicalIncompatibility (mutually exclusive system states). Reply with a JSON object "
    '{"kind": ..., "confidence": 0.0-1.0, "rationale": ...}.'
)

MODERATOR_SYSTEM_PROMPT = (
    "You are the Orchestrator, a neutral moderator. Synthesize the thesis and the peer critiques "
    "into a revised requirement scoped to the focal conflict only. You may decompose the focal "
    "requirement into sub-requirements. Reply with a JSON object "
    '{"candidates": [{"proposed_text": ..., "status_claim": "Unresolved|Partial|Consensus", '
    '"decomposition": [{"suffix": ".1", "text": ..., "level": "Operational"}]}]}.'
)

STITCH_SYSTEM_PROMPT = (
    "You integrate requirements into a KAOS goal model. Choose which candidate parent goals "
    'the child goal refines. Reply with a JSON object {"parent_ids": [...]}.'
)

APPLICABILITY_SYSTEM_PROMPT = (
    "You decide whether a standard clause imposes obligations on the described project. "
    'Reply with a JSON object {"applicable": true|false, "justification": ...}.'
)

VERIFIER_SYSTEM_PROMPT = (
    "You verify whether the evidence requirements satisfy a standard clause. Predict an "
    "entailment label Satisfied, Partially or NotSatisfied, name the best supporting "
    "requirement and quote the clause text you relied on. Reply with a JSON object "
    '{"label": ..., "best_requirement_id": ..., "rationale": ..., "citation": ...}.'
)

HALLUCINATION_SYSTEM_PROMPT = (
    "You check whether standard references cited by a requirement are supported by the "
    "retrieved clauses. Reply with a JSON object "
    '{"supported": true|false, "rationale": ...}.'
)

JUDGE_SYSTEM_PROMPT = (
    "You are an independent reviewer applying ISO/IEC/IEEE 29148 quality criteria to a "
    "requirement set. Score each criterion from 1 to 5: unambiguous, correctness, "
    "verifiability, set_consistency, set_feasibility, and terminology (consistent use of "
    "terms across the set). Reply with a JSON object using these keys."
)

MATERIALS_SYSTEM_PROMPT = (
    "You derive downstream engineering material from a verified goal model: outline test "
    "cases for operational goals and an architecture note per strategic goal. Reply in markdown."
)
