"""
Agent service: quality-specialized prompt assembly and Phase-1 generation.
"""
import asyncio
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from app.core import prompts as P
from app.core.app_logging import agent_logger, log_error
from app.core.config import DATA_DIR, RunConfig
from app.core.exceptions import AgentOutputError, DecodeError, InvalidArgumentError, PipelineError
from app.schemas.provider import ChatRequest
from app.schemas.requirement import KaosLevel, QualityDimension, Requirement, RequirementSet
from app.services.ai_service import BaseProvider
from app.utils.json_utils import extract_json


AGENTS_DIR = DATA_DIR / "agents"


class AgentSpec(BaseModel):
    """Prompt components of one quality-specialized agent."""
    dimension: QualityDimension
    role_definition: str = Field(..., min_length=1)
    task_instruction: str = Field(..., min_length=1, description="Chain-of-thought directive")
    output_schema: str = Field(..., min_length=1, description="JSON schema of requirement fields")
    agent_role: str = ""


class GenerationResult(BaseModel):
    """Requirements from one agent plus the number of malformed items dropped."""
    dimension: QualityDimension
    requirements: List[Requirement]
    malformed_count: int = 0
    repair_attempts: int = 0


class Phase1Result(BaseModel):
    requirements: RequirementSet
    malformed: Dict[str, int] = Field(default_factory=dict)


def load_agent_specs(directory: Optional[Path] = None) -> List[AgentSpec]:
    """Load the five agent specs in dimension order."""
    directory = directory or AGENTS_DIR
    specs = []
    for dim in QualityDimension:
        path = Path(directory) / f"{dim.value.lower()}.json"
        specs.append(AgentSpec.model_validate_json(path.read_text(encoding="utf-8")))
    return specs


def assemble_prompt(
    spec: AgentSpec,
    project_description: str,
    config: RunConfig,
    seed: int,
) -> ChatRequest:
    """Zero-shot request: system prompt from the AgentSpec, user prompt is the project."""
    if not project_description or not project_description.strip():
        raise InvalidArgumentError("project description must be non-empty")
    system_prompt = "\n\n".join([spec.role_definition, spec.task_instruction, spec.output_schema])
    return ChatRequest(
        system_prompt=system_prompt,
        user_prompt=project_description,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
        seed=seed,
        task=P.Task.GENERATE,
        persona=spec.dimension.value,
    )


def _parse_items(raw: str) -> list:
    data = extract_json(raw)
    if isinstance(data, dict):
        data = data.get("requirements")
    if not isinstance(data, list):
        raise DecodeError("expected a JSON array of requirements")
    return data


def _parse_item(item: object) -> Optional[Tuple[str, KaosLevel, str]]:
    if not isinstance(item, dict):
        return None
    description = item.get("description")
    level = item.get("level")
    rationale = item.get("rationale", "")
    if not isinstance(description, str) or not description.strip():
        return None
    if not isinstance(level, str):
        return None
    try:
        parsed_level = KaosLevel.parse(level)
    except ValueError:
        return None
    if not isinstance(rationale, str):
        rationale = json.dumps(rationale)
    return description.strip(), parsed_level, rationale.strip()


async def generate_requirements(
    spec: AgentSpec,
    project: str,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> GenerationResult:
    """Run one agent and turn its JSON answer into stamped requirements."""

    request = assemble_prompt(spec, project, config, seed)
    agent = spec.dimension.value
    raw = ""
    items: Optional[list] = None
    attempts = 0

    for attempt in range(config.reprompt_attempts + 1):
        attempts = attempt
        if attempt:
            request = request.model_copy(update={"user_prompt": f"{project}\n\n{P.FORMAT_REMINDER}"})
            agent_logger.warning(f"Re-prompting {agent} agent for well-formed output (attempt {attempt})")
        try:
            raw = await provider.chat(request)
            items = _parse_items(raw)
            break
        except DecodeError:
            continue

    if items is None:
        raise AgentOutputError(agent, raw)

    counters: Dict[KaosLevel, int] = {level: 0 for level in KaosLevel}
    requirements: List[Requirement] = []
    malformed = 0
    for item in items:
        parsed = _parse_item(item)
        if parsed is None:
            malformed += 1
            continue
        if len(requirements) >= config.per_agent_budget:
            break
        description, level, rationale = parsed
        counters[level] += 1
        requirements.append(Requirement(
            id=f"{spec.dimension.prefix}-{level.prefix}{counters[level]}",
            description=description,
            dimension=spec.dimension,
            level=level,
            rationale=rationale,
            source_agent=agent,
            phase_of_origin=1,
        ))

    if malformed:
        agent_logger.warning(f"{agent} agent: dropped {malformed} malformed item(s)")
    agent_logger.info(f"{agent} agent generated {len(requirements)} requirement(s)")
    return GenerationResult(
        dimension=spec.dimension,
        requirements=requirements,
        malformed_count=malformed,
        repair_attempts=attempts,
    )


async def run_phase1(
    project: str,
    specs: Sequence[AgentSpec],
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
) -> Phase1Result:
    """Run all five agents in parallel and merge in dimension order."""

    dims = sorted((s.dimension for s in specs), key=lambda d: d.axis)
    if dims != list(QualityDimension):
        raise InvalidArgumentError("Phase 1 needs exactly one spec per quality dimension")

    results = await asyncio.gather(
        *(generate_requirements(spec, project, config, provider, seed) for spec in specs),
        return_exceptions=True,
    )

    by_dimension: Dict[QualityDimension, GenerationResult] = {}
    for spec, result in zip(specs, results):
        if isinstance(result, BaseException):
            log_error(result, {"phase": "phase1", "agent": spec.dimension.value})
            raise PipelineError("phase1", str(result), agent=spec.dimension.value) from result
        by_dimension[spec.dimension] = result

    merged: List[Requirement] = []
    for dim in QualityDimension:
        merged.extend(by_dimension[dim].requirements)

    return Phase1Result(
        requirements=RequirementSet(requirements=merged, phase_label=1),
        malformed={dim.value: by_dimension[dim].malformed_count for dim in QualityDimension},
    )
