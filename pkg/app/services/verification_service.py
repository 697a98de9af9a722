"""
Verification service: applicability filtering, clause entailment voting and hallucination checks.
"""
import asyncio
import json
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from app.core import prompts as P
from app.core.app_logging import log_error, verification_logger
from app.core.config import RunConfig
from app.core.exceptions import DecodeError, InvalidArgumentError, ProviderError
from app.schemas.provider import ChatRequest, ClauseRecord
from app.schemas.requirement import CaseProject, Requirement, RequirementSet
from app.schemas.verification import (
    ApplicabilityDecision,
    ComplianceLabel,
    ComplianceReport,
    ComplianceVerdict,
    HallucinationResult,
    majority_label,
)
from app.services.ai_service import BaseProvider
from app.services.constraint_service import extract_constraints, logic_check
from app.services.vector_index import VectorIndex, retrieve_top_k
from app.utils.json_utils import extract_json
from app.utils.standards import extract_references, reference_matches
from app.utils.text_utils import first_sentence


COVERED_LABELS = (ComplianceLabel.SATISFIED, ComplianceLabel.PARTIALLY)


def _flat(text: str) -> str:
    return " ".join(text.split())


def load_corpus(path: Union[str, Path]) -> List[ClauseRecord]:
    """Read a clause corpus in JSON-lines format."""
    clauses = []
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                clauses.append(ClauseRecord.model_validate(json.loads(line)))
            except (json.JSONDecodeError, ValidationError) as e:
                raise InvalidArgumentError(f"{path}:{number}: invalid clause record: {e}") from e
    return clauses


def _request(system: str, lines: List[str], task: str, config: RunConfig, seed: int, temperature: float) -> ChatRequest:
    return ChatRequest(
        system_prompt=system,
        user_prompt="\n".join(lines),
        temperature=temperature,
        max_tokens=config.max_tokens,
        seed=seed,
        task=task,
        persona=P.VERIFIER_PERSONA,
    )


# Applicability

async def _classify_applicability(
    clause: ClauseRecord,
    project: CaseProject,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> ApplicabilityDecision:
    request = _request(
        P.APPLICABILITY_SYSTEM_PROMPT,
        [
            f"{P.CLAUSE_MARKER} {clause.clause_id}",
            f"{P.CLAUSE_TEXT_MARKER} {_flat(clause.text)}",
            f"{P.PROJECT_TAGS_MARKER} {', '.join(project.domain_tags)}",
            _flat(project.description),
        ],
        P.Task.APPLICABILITY,
        config,
        seed,
        temperature=0.0,
    )
    try:
        data = extract_json(await provider.chat(request))
        if not isinstance(data, dict) or not isinstance(data.get("applicable"), bool):
            raise DecodeError("applicability answer needs a boolean 'applicable'")
    except ProviderError as e:
        log_error(e, {"clause": clause.clause_id})
        verification_logger.warning(f"Applicability classifier failed for {clause.clause_id}; clause retained")
        return ApplicabilityDecision(
            clause_id=clause.clause_id,
            applicable=True,
            justification=f"classifier unavailable: {e}",
            stage="fallback",
        )
    return ApplicabilityDecision(
        clause_id=clause.clause_id,
        applicable=data["applicable"],
        justification=str(data.get("justification", "")),
        stage="classifier",
    )


async def filter_applicable(
    corpus: Sequence[ClauseRecord],
    project: CaseProject,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> Tuple[List[ClauseRecord], List[ApplicabilityDecision]]:
    """Tag filter followed by the applicability classifier."""
    if not corpus:
        raise InvalidArgumentError("clause corpus must not be empty")

    tags = {t.lower() for t in project.domain_tags}
    decisions: List[ApplicabilityDecision] = []
    staged: List[ClauseRecord] = []
    for clause in corpus:
        if tags & {t.lower() for t in clause.domain_tags}:
            staged.append(clause)
        else:
            decisions.append(ApplicabilityDecision(
                clause_id=clause.clause_id,
                applicable=False,
                justification="no shared domain tag",
                stage="tag-filter",
            ))

    classified = await asyncio.gather(
        *(_classify_applicability(c, project, config, provider, seed) for c in staged)
    )
    decisions.extend(classified)
    applicable = [c for c, d in zip(staged, classified) if d.applicable]

    verification_logger.info(
        f"Applicability: {len(staged)} of {len(corpus)} clause(s) passed the tag filter, {len(applicable)} applicable"
    )
    decisions.sort(key=lambda d: d.clause_id)
    return applicable, decisions


# Clause entailment

def build_verifier_request(
    clause: ClauseRecord,
    evidence: Sequence[Requirement],
    config: RunConfig,
    seed: int,
) -> ChatRequest:
    lines = [
        f"{P.CLAUSE_MARKER} {clause.clause_id}",
        f"{P.CLAUSE_TEXT_MARKER} {_flat(clause.text)}",
    ]
    if clause.context:
        lines.append(f"Context: {_flat(clause.context)}")
    lines += [f"{P.EVIDENCE_MARKER} {r.id} | {_flat(r.description)}" for r in evidence]
    return _request(P.VERIFIER_SYSTEM_PROMPT, lines, P.Task.VERIFY, config, seed, config.temperature)


async def judge_clause(
    clause: ClauseRecord,
    requirement_set: RequirementSet,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
    index: Optional[VectorIndex[Requirement]] = None,
) -> ComplianceVerdict:
    """Self-consistency vote of the verifier over retrieved evidence."""
    if index is None:
        index = await VectorIndex.build(
            provider, [(r.id, r.description, r) for r in requirement_set.requirements]
        )
    query = f"{clause.text} {clause.context}".strip()
    evidence = [payload for _, _, payload in await retrieve_top_k(query, index, config.top_k, provider)]
    evidence_ids = {r.id for r in evidence}

    votes: List[ComplianceLabel] = []
    answers: List[Tuple[ComplianceLabel, dict]] = []
    failures = 0
    for v in range(config.judge_votes):
        request = build_verifier_request(clause, evidence, config, seed + v)
        try:
            data = extract_json(await provider.chat(request))
            if not isinstance(data, dict):
                raise DecodeError("verifier answer must be a JSON object")
            label = ComplianceLabel.parse(str(data.get("label", "")))
        except (ProviderError, ValueError) as e:
            failures += 1
            verification_logger.warning(f"Verifier vote {v + 1} for {clause.clause_id} failed: {e}")
            votes.append(ComplianceLabel.NOT_SATISFIED)
            continue
        votes.append(label)
        answers.append((label, data))

    label = majority_label(votes)
    if not answers:
        return ComplianceVerdict(
            clause_id=clause.clause_id,
            label=label,
            citation=first_sentence(clause.text),
            votes=votes,
            error="all verifier calls failed",
        )

    _, chosen = next(((lbl, d) for lbl, d in answers if lbl is label), answers[0])
    citation = str(chosen.get("citation") or "").strip()
    if not citation or citation not in clause.text:
        citation = first_sentence(clause.text)
    best = chosen.get("best_requirement_id")
    return ComplianceVerdict(
        clause_id=clause.clause_id,
        label=label,
        best_requirement_id=best if best in evidence_ids else None,
        rationale=str(chosen.get("rationale", "")),
        citation=citation,
        votes=votes,
        error=f"{failures} verifier call(s) failed" if failures else None,
    )


def compliance_coverage(verdicts: Sequence[ComplianceVerdict]) -> float:
    """Share of applicable clauses judged Satisfied or Partially."""
    if not verdicts:
        verification_logger.warning("No applicable clauses; compliance coverage defaults to 1.0")
        return 1.0
    return sum(1 for v in verdicts if v.label in COVERED_LABELS) / len(verdicts)


# Hallucination detection

async def hallucination_check(
    requirement: Requirement,
    corpus: Sequence[ClauseRecord],
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
    index: Optional[VectorIndex[ClauseRecord]] = None,
) -> HallucinationResult:
    """Flag standard references that retrieved clauses do not support."""
    references = extract_references(requirement.description)
    if not references:
        return HallucinationResult(requirement_id=requirement.id, skipped=True)

    if index is None:
        index = await VectorIndex.build(provider, [(c.clause_id, c.text, c) for c in corpus])
    retrieved = [payload for _, _, payload in await retrieve_top_k(requirement.description, index, config.top_k, provider)]
    seen = {c.clause_id for c in retrieved}
    for clause in corpus:
        if clause.clause_id not in seen and any(reference_matches(ref, clause.clause_id) for ref in references):
            retrieved.append(clause)
            seen.add(clause.clause_id)

    lines = [f"{P.REQUIREMENT_MARKER} {requirement.id} | {_flat(requirement.description)}"]
    lines += [f"{P.REFERENCE_MARKER} {ref}" for ref in references]
    lines += [f"{P.RETRIEVED_CLAUSE_MARKER} {c.clause_id} | {_flat(c.text)}" for c in retrieved]
    request = _request(P.HALLUCINATION_SYSTEM_PROMPT, lines, P.Task.HALLUCINATION, config, seed, temperature=0.0)

    nearest = [c.clause_id for c in retrieved]
    try:
        data = extract_json(await provider.chat(request))
        if not isinstance(data, dict) or not isinstance(data.get("supported"), bool):
            raise DecodeError("hallucination answer needs a boolean 'supported'")
    except ProviderError as e:
        log_error(e, {"requirement": requirement.id})
        verification_logger.warning(f"Hallucination judge failed for {requirement.id}; left unflagged")
        return HallucinationResult(
            requirement_id=requirement.id,
            references=references,
            nearest_clauses=nearest,
            rationale=f"judge unavailable: {e}",
        )

    flagged = not data["supported"]
    if flagged:
        verification_logger.warning(f"{requirement.id} cites unsupported references {references}")
    return HallucinationResult(
        requirement_id=requirement.id,
        references=references,
        flagged=flagged,
        nearest_clauses=nearest,
        rationale=str(data.get("rationale", "")),
    )


async def run_phase4(
    requirement_set: RequirementSet,
    project: CaseProject,
    corpus: Sequence[ClauseRecord],
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> ComplianceReport:
    """Verify a requirement set without modifying it."""
    logic = logic_check(extract_constraints(requirement_set))

    applicable, decisions = await filter_applicable(corpus, project, config, provider, seed)
    requirement_index = await VectorIndex.build(
        provider, [(r.id, r.description, r) for r in requirement_set.requirements]
    )
    verdicts = await asyncio.gather(
        *(judge_clause(c, requirement_set, config, provider, seed, index=requirement_index) for c in applicable)
    )
    coverage = compliance_coverage(verdicts)

    clause_index = await VectorIndex.build(provider, [(c.clause_id, c.text, c) for c in corpus])
    hallucinations = await asyncio.gather(
        *(hallucination_check(r, corpus, config, provider, seed, index=clause_index) for r in requirement_set.requirements)
    )

    verification_logger.info(
        f"Verification: S_logic={logic.score:.3f}, coverage={coverage:.3f} over {len(verdicts)} clause(s), "
        f"{sum(1 for h in hallucinations if h.flagged)} hallucination flag(s)"
    )
    return ComplianceReport(
        applicability=decisions,
        verdicts=list(verdicts),
        coverage=coverage,
        hallucinations=list(hallucinations),
        logic=logic,
    )
