"""
Metrics service: quality projection, diversity and balance metrics, set preservation and the quality judge.
"""
import asyncio
import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import ConvexHull, Delaunay, QhullError

from app.core import prompts as P
from app.core.app_logging import log_error, metrics_logger
from app.core.config import RunConfig
from app.core.exceptions import DecodeError, InvalidArgumentError, JudgeError, ProjectionError
from app.schemas.conflict import ConflictRegistry, ConflictStatus
from app.schemas.metrics import AxisCounts, Iso29148Scores, MatchPair, MetricsReport, PreservationScore, RunSummary
from app.schemas.provider import ChatRequest
from app.schemas.requirement import QualityDimension, QualityVector, RequirementSet
from app.services.ai_service import BaseProvider
from app.utils.json_utils import extract_json


QUALITY_DIMS = 5
PROJECTION_RETRIES = 2
ISO_CRITERIA = ("unambiguous", "correctness", "verifiability", "set_consistency", "set_feasibility", "terminology")

PointsLike = Union[Sequence[QualityVector], Sequence[Sequence[float]], np.ndarray]
TextSet = Union[RequirementSet, Sequence[str]]


def _as_points(points: PointsLike) -> np.ndarray:
    rows = [p.components if isinstance(p, QualityVector) else p for p in points]
    if not rows:
        return np.zeros((0, QUALITY_DIMS))
    return np.asarray(rows, dtype=float)


def _texts(value: TextSet) -> List[str]:
    if isinstance(value, RequirementSet):
        return value.descriptions()
    return list(value)


# Quality projection

def build_projection_request(text: str, config: RunConfig, seed: int) -> ChatRequest:
    return ChatRequest(
        system_prompt=P.PROJECTION_SYSTEM_PROMPT,
        user_prompt=" ".join(text.split()),
        temperature=config.temperature,
        max_tokens=config.max_tokens,
        seed=seed,
        task=P.Task.PROJECT,
        persona=P.JUDGE_PERSONA,
    )


def _parse_projection(raw: str) -> List[float]:
    data = extract_json(raw)
    try:
        if isinstance(data, dict):
            lowered = {str(k).lower(): v for k, v in data.items()}
            values = [float(lowered[d.value.lower()]) for d in QualityDimension]
        elif isinstance(data, list) and len(data) == QUALITY_DIMS:
            values = [float(v) for v in data]
        else:
            raise DecodeError("projection must name all five axes")
    except (KeyError, TypeError, ValueError) as e:
        raise DecodeError(f"bad projection: {e}") from e
    if not all(math.isfinite(v) for v in values):
        raise DecodeError("projection scores must be finite")
    return values


async def project_quality(
    text: str,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> QualityVector:
    """Rate one requirement on all five quality axes in a single call."""
    if not text or not text.strip():
        raise InvalidArgumentError("cannot project an empty requirement")

    request = build_projection_request(text, config, seed)
    last_error: Exception = DecodeError("no attempt made")
    for attempt in range(PROJECTION_RETRIES + 1):
        try:
            values = _parse_projection(await provider.chat(request))
        except DecodeError as e:
            last_error = e
            metrics_logger.warning(f"Unparseable quality projection (attempt {attempt + 1}): {e}")
            continue
        return QualityVector.clamped(values)
    raise ProjectionError(f"quality projection failed: {last_error}")


async def project_set(
    requirement_set: RequirementSet,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> List[QualityVector]:
    return list(await asyncio.gather(
        *(project_quality(r.description, config, provider, seed) for r in requirement_set.requirements)
    ))


# Diversity and balance

def chv(points: PointsLike) -> Tuple[float, bool]:
    """Convex-hull volume in quality space and a degeneracy flag.

    The hull is triangulated and the simplex volumes |det| / 5! are summed.
    """
    pts = _as_points(points)
    if pts.shape[0] < QUALITY_DIMS + 1:
        return 0.0, True
    if np.linalg.matrix_rank(pts[1:] - pts[0], tol=1e-12) < QUALITY_DIMS:
        return 0.0, True

    try:
        hull = ConvexHull(pts)
        vertices = pts[hull.vertices]
        triangulation = Delaunay(vertices)
    except QhullError as e:
        metrics_logger.warning(f"Hull triangulation failed, reporting a degenerate volume: {e}")
        return 0.0, True

    corners = vertices[triangulation.simplices]
    edges = corners[:, 1:, :] - corners[:, :1, :]
    volume = float(np.abs(np.linalg.det(edges)).sum()) / math.factorial(QUALITY_DIMS)
    return volume, False


def mdc(points: PointsLike) -> float:
    """Mean Euclidean distance to the centroid."""
    pts = _as_points(points)
    if pts.shape[0] == 0:
        raise InvalidArgumentError("mean distance to centroid needs at least one point")
    centroid = pts.mean(axis=0)
    return float(np.linalg.norm(pts - centroid, axis=1).mean())


def axis_counts(requirement_set: RequirementSet) -> AxisCounts:
    """Requirements per quality axis, by producing agent."""
    counts = [0] * QUALITY_DIMS
    for r in requirement_set.requirements:
        try:
            dim = QualityDimension.parse(r.source_agent)
        except ValueError:
            dim = r.dimension
        counts[dim.axis] += 1
    return AxisCounts(counts=tuple(counts))  # type: ignore[arg-type]


def cu(counts: AxisCounts) -> float:
    """Population standard deviation of the per-axis counts."""
    return float(np.std(np.asarray(counts.counts, dtype=float)))


def mac(counts: AxisCounts) -> int:
    return min(counts.counts)


def crr(registry: ConflictRegistry) -> float:
    """Share of negotiable conflicts that reached Consensus."""
    negotiable = registry.negotiable()
    if not negotiable:
        metrics_logger.warning("No negotiable conflicts detected; conflict resolution rate defaults to 1.0")
        return 1.0
    resolved = sum(1 for c in negotiable if c.status is ConflictStatus.CONSENSUS)
    return resolved / len(negotiable)


# Set-level semantic preservation

def preservation_from_matrix(similarities: Union[np.ndarray, Sequence[Sequence[float]]]) -> PreservationScore:
    """Maximum-weight matching over a similarity matrix padded to square with zeros."""
    s = np.asarray(similarities, dtype=float)
    if s.ndim != 2:
        s = s.reshape(0, 0)
    n_a, n_b = s.shape
    n = max(n_a, n_b)
    if n == 0:
        return PreservationScore(score=1.0, matching=[])

    padded = np.zeros((n, n))
    padded[:n_a, :n_b] = s
    rows, cols = linear_sum_assignment(padded, maximize=True)

    matching = [
        MatchPair(
            index_a=int(i) if i < n_a else None,
            index_b=int(j) if j < n_b else None,
            similarity=float(padded[i, j]),
        )
        for i, j in zip(rows, cols)
    ]
    score = float(padded[rows, cols].sum()) / n
    return PreservationScore(score=min(1.0, max(0.0, score)), matching=matching)


def exact_match_matrix(texts_a: Sequence[str], texts_b: Sequence[str]) -> np.ndarray:
    """Similarity oracle scoring identical strings 1 and everything else 0."""
    return np.asarray(
        [[1.0 if a == b else 0.0 for b in texts_b] for a in texts_a],
        dtype=float,
    ).reshape(len(texts_a), len(texts_b))


async def set_preservation(
    set_a: TextSet,
    set_b: TextSet,
    provider: Optional[BaseProvider] = None,
) -> PreservationScore:
    """Mean matched similarity between two requirement sets.

    Without a provider the exact-match oracle is used.
    """
    texts_a, texts_b = _texts(set_a), _texts(set_b)
    if not texts_a or not texts_b:
        return preservation_from_matrix(np.zeros((len(texts_a), len(texts_b))))
    if provider is None:
        matrix = exact_match_matrix(texts_a, texts_b)
    else:
        matrix = await provider.similarity_matrix(texts_a, texts_b)
    return preservation_from_matrix(matrix)


# Quality judge

def build_judge_request(requirement_set: RequirementSet, config: RunConfig, seed: int) -> ChatRequest:
    lines = [
        f"{P.REQUIREMENT_MARKER} {r.id} | {' '.join(r.description.split())}"
        for r in requirement_set.requirements
    ]
    return ChatRequest(
        system_prompt=P.JUDGE_SYSTEM_PROMPT,
        user_prompt="\n".join(lines),
        temperature=0.0,
        max_tokens=config.max_tokens,
        seed=seed,
        task=P.Task.JUDGE,
        persona=P.JUDGE_PERSONA,
    )


async def iso29148_judge(
    requirement_set: RequirementSet,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> Iso29148Scores:
    """Score a requirement set on the ISO/IEC/IEEE 29148 criteria."""
    if not len(requirement_set):
        raise InvalidArgumentError("the quality judge needs a non-empty requirement set")

    raw = await provider.chat(build_judge_request(requirement_set, config, seed))
    try:
        data = extract_json(raw)
        if not isinstance(data, dict):
            raise JudgeError("judge answer must be a JSON object")
        lowered = {str(k).lower().replace(" ", "_"): v for k, v in data.items()}
        scores = {name: min(5.0, max(1.0, float(lowered[name]))) for name in ISO_CRITERIA}
    except (DecodeError, KeyError, TypeError, ValueError) as e:
        log_error(e, {"task": P.Task.JUDGE})
        raise JudgeError(f"unusable judge answer: {e}") from e
    return Iso29148Scores(**scores)


def summarize_runs(case: str, reports: Sequence[MetricsReport]) -> RunSummary:
    """Arithmetic mean of every scalar metric across seeds."""
    if not reports:
        raise InvalidArgumentError("cannot summarize zero runs")
    per_run = [r.scalars() for r in reports]
    keys = sorted(set.intersection(*(set(s) for s in per_run)))
    means: Dict[str, float] = {k: float(np.mean([s[k] for s in per_run])) for k in keys}
    return RunSummary(
        case=case,
        seeds=[r.seed for r in reports],
        means=means,
        runs=list(reports),
    )
