"""
Conflict coordinator: similarity screening and LLM classification.
"""
import asyncio
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.core import prompts as P
from app.core.app_logging import log_error, negotiation_logger
from app.core.config import RunConfig
from app.core.exceptions import ClassificationError, DecodeError, InvalidArgumentError, ProviderError
from app.schemas.conflict import Conflict, ConflictKind, ConflictRegistry
from app.schemas.provider import ChatRequest
from app.schemas.requirement import Requirement, RequirementSet
from app.services.ai_service import BaseProvider, cosine_matrix
from app.utils.json_utils import extract_json


CLASSIFY_RETRIES = 2
FALLBACK_KIND = ConflictKind.REDUNDANT
FALLBACK_SEVERITY = 0.3


class OverlapCandidate(BaseModel):
    """A requirement pair whose similarity exceeds the screening threshold."""
    left_id: str
    right_id: str
    similarity: float


class Classification(BaseModel):
    kind: ConflictKind
    confidence: float = Field(..., ge=0.0, le=1.0)
    severity: float = Field(..., ge=0.0, le=1.0)
    rationale: str = ""
    degraded: bool = False


async def pairwise_similarities(
    requirement_set: RequirementSet,
    provider: BaseProvider,
) -> Tuple[List[Requirement], np.ndarray]:
    """Requirements in id order and their cosine matrix."""
    ordered = sorted(requirement_set.requirements, key=lambda r: r.id)
    if not ordered:
        return ordered, cosine_matrix([])
    vectors = await provider.embed([r.description for r in ordered])
    return ordered, cosine_matrix(vectors)


async def detect_overlaps(
    requirement_set: RequirementSet,
    tau: float,
    provider: BaseProvider,
) -> List[OverlapCandidate]:
    """All pairs, canonical by id, whose cosine similarity strictly exceeds tau."""
    if not 0.0 < tau < 1.0:
        raise InvalidArgumentError(f"tau must lie in (0, 1), got {tau}")

    ordered, sims = await pairwise_similarities(requirement_set, provider)
    candidates = []
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            s = float(sims[i, j])
            if s > tau:
                candidates.append(OverlapCandidate(
                    left_id=ordered[i].id,
                    right_id=ordered[j].id,
                    similarity=min(1.0, s),
                ))
    negotiation_logger.info(f"Screening flagged {len(candidates)} of {len(ordered) * (len(ordered) - 1) // 2} pairs (tau={tau})")
    return candidates


def _record(r: Requirement) -> str:
    return f"{r.id} | {r.dimension.value} | {r.level.value} | {' '.join(r.description.split())}"


def build_classification_request(
    left: Requirement,
    right: Requirement,
    similarity: float,
    config: RunConfig,
    seed: int,
) -> ChatRequest:
    user_prompt = "\n".join([
        f"{P.LEFT_MARKER} {_record(left)}",
        f"{P.RIGHT_MARKER} {_record(right)}",
        f"{P.SIMILARITY_MARKER} {similarity:.4f}",
    ])
    return ChatRequest(
        system_prompt=P.CLASSIFY_SYSTEM_PROMPT,
        user_prompt=user_prompt,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
        seed=seed,
        task=P.Task.CLASSIFY,
        persona="Coordinator",
    )


def _parse_classification(raw: str) -> Tuple[ConflictKind, float, str]:
    data = extract_json(raw)
    if not isinstance(data, dict) or "kind" not in data:
        raise DecodeError("classification must be an object with a kind")
    try:
        kind = ConflictKind.parse(str(data["kind"]))
        confidence = float(data.get("confidence", 1.0))
    except (TypeError, ValueError) as e:
        raise DecodeError(str(e)) from e
    rationale = str(data.get("rationale", ""))
    return kind, min(1.0, max(0.0, confidence)), rationale


async def classify_pair(
    left: Requirement,
    right: Requirement,
    similarity: float,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> Classification:
    """Classify a flagged pair; severity is confidence times the kind weight."""
    if left.id > right.id:
        left, right = right, left
    request = build_classification_request(left, right, similarity, config, seed)

    last_error: Exception = DecodeError("no attempt made")
    for attempt in range(CLASSIFY_RETRIES + 1):
        try:
            raw = await provider.chat(request)
            kind, confidence, rationale = _parse_classification(raw)
        except DecodeError as e:
            last_error = e
            negotiation_logger.warning(f"Unparseable classification for {left.id}~{right.id} (attempt {attempt + 1}): {e}")
            continue
        return Classification(
            kind=kind,
            confidence=confidence,
            severity=round(confidence * kind.weight, 12),
            rationale=rationale,
        )
    raise ClassificationError(f"classification of {left.id}~{right.id} failed: {last_error}")


async def build_registry(
    requirement_set: RequirementSet,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> ConflictRegistry:
    """Screen, classify and prioritize conflicts for one requirement set."""

    candidates = await detect_overlaps(requirement_set, config.tau_overlap, provider)
    by_id = requirement_set.by_id()

    async def classify(candidate: OverlapCandidate) -> Classification:
        try:
            return await classify_pair(
                by_id[candidate.left_id], by_id[candidate.right_id], candidate.similarity, config, provider, seed
            )
        except (ClassificationError, ProviderError) as e:
            log_error(e, {"pair": f"{candidate.left_id}~{candidate.right_id}"})
            negotiation_logger.warning(
                f"Classification degraded to {FALLBACK_KIND.value} for {candidate.left_id}~{candidate.right_id}"
            )
            return Classification(
                kind=FALLBACK_KIND,
                confidence=1.0,
                severity=FALLBACK_SEVERITY,
                rationale=f"classification unavailable: {e}",
                degraded=True,
            )

    classifications = await asyncio.gather(*(classify(c) for c in candidates))

    conflicts = [
        Conflict(
            left_id=c.left_id,
            right_id=c.right_id,
            kind=cl.kind,
            severity=cl.severity,
            similarity=c.similarity,
            rationale=cl.rationale,
        )
        for c, cl in zip(candidates, classifications)
    ]
    conflicts.sort(key=lambda c: c.sort_key())

    negotiation_logger.info(
        f"Registry built with {len(conflicts)} conflict(s), "
        f"{sum(1 for c in conflicts if c.kind.negotiable)} negotiable"
    )
    return ConflictRegistry(
        conflicts=conflicts,
        source_set_id=f"phase{requirement_set.phase_label}:{requirement_set.digest()}",
    )
