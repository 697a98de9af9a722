"""
Unit tests for Phase-1 generation.
"""
import json

import pytest
from unittest.mock import AsyncMock, patch

from app.core import prompts as P
from app.core.exceptions import AgentOutputError, InvalidArgumentError, PipelineError
from app.schemas.requirement import KaosLevel, QualityDimension
from app.services.agent_service import assemble_prompt, generate_requirements, run_phase1


PROJECT = "An autonomous shuttle operating on a university campus."


class TestAssemblePrompt:

    def test_prompt_is_built_from_spec_components(self, agent_specs, run_config):
        spec = agent_specs[0]
        request = assemble_prompt(spec, PROJECT, run_config, seed=101)
        assert spec.role_definition in request.system_prompt
        assert spec.task_instruction in request.system_prompt
        assert spec.output_schema in request.system_prompt
        assert request.user_prompt == PROJECT
        assert request.task == P.Task.GENERATE
        assert request.persona == "Safety"
        assert request.seed == 101

    def test_empty_project_rejected(self, agent_specs, run_config):
        with pytest.raises(InvalidArgumentError):
            assemble_prompt(agent_specs[0], "   ", run_config, seed=1)

    def test_specs_cover_every_dimension(self, agent_specs):
        assert [s.dimension for s in agent_specs] == list(QualityDimension)


class TestGenerateRequirements:

    @pytest.mark.asyncio
    async def test_ids_are_stamped_per_level(self, agent_specs, run_config, hash_provider):
        answer = json.dumps([
            {"id": "x", "description": "Avoid collisions.", "level": "Strategic", "rationale": "top"},
            {"id": "y", "description": "Detect sensor faults.", "level": "Tactical", "rationale": "r"},
            {"id": "z", "description": "Bound fusion latency.", "level": "TG", "rationale": "r"},
            {"id": "w", "description": "Brake within 150 ms.", "level": "Operational"},
        ])
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, return_value=answer):
            result = await generate_requirements(agent_specs[0], PROJECT, run_config, hash_provider, seed=1)

        assert [r.id for r in result.requirements] == ["S-SG1", "S-TG1", "S-TG2", "S-OG1"]
        assert result.requirements[2].level is KaosLevel.TACTICAL
        assert all(r.phase_of_origin == 1 and r.source_agent == "Safety" for r in result.requirements)
        assert result.malformed_count == 0

    @pytest.mark.asyncio
    async def test_malformed_items_are_dropped(self, agent_specs, run_config, hash_provider):
        answer = json.dumps({"requirements": [
            {"description": "Valid one.", "level": "Tactical"},
            {"description": "", "level": "Tactical"},
            {"description": "Bad level.", "level": "Galactic"},
            "not an object",
        ]})
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, return_value=answer):
            result = await generate_requirements(agent_specs[1], PROJECT, run_config, hash_provider, seed=1)

        assert [r.id for r in result.requirements] == ["E-TG1"]
        assert result.malformed_count == 3

    @pytest.mark.asyncio
    async def test_unparseable_output_is_reprompted(self, agent_specs, run_config, hash_provider):
        valid = json.dumps([{"description": "Keep energy low.", "level": "Strategic"}])
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock,
                          side_effect=["I think the requirements are...", valid]) as mock_chat:
            result = await generate_requirements(agent_specs[2], PROJECT, run_config, hash_provider, seed=1)

        assert result.repair_attempts == 1
        assert P.FORMAT_REMINDER in mock_chat.call_args_list[1].args[0].user_prompt
        assert [r.id for r in result.requirements] == ["G-SG1"]

    @pytest.mark.asyncio
    async def test_persistent_garbage_raises(self, agent_specs, run_config, hash_provider):
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, return_value="no json") as mock_chat:
            with pytest.raises(AgentOutputError) as exc_info:
                await generate_requirements(agent_specs[0], PROJECT, run_config, hash_provider, seed=1)

        assert exc_info.value.raw_text == "no json"
        assert mock_chat.call_count == run_config.reprompt_attempts + 1

    @pytest.mark.asyncio
    async def test_budget_caps_output(self, agent_specs, run_config, hash_provider):
        config = run_config.with_overrides(per_agent_budget=2)
        answer = json.dumps([{"description": f"Requirement {i}.", "level": "Operational"} for i in range(5)])
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, return_value=answer):
            result = await generate_requirements(agent_specs[0], PROJECT, config, hash_provider, seed=1)
        assert len(result.requirements) == 2


class TestRunPhase1:

    @pytest.mark.asyncio
    async def test_merges_in_dimension_order(self, agent_specs, run_config, hash_provider):
        result = await run_phase1(PROJECT, agent_specs, run_config, hash_provider, seed=101)
        requirement_set = result.requirements
        dims = [r.dimension.axis for r in requirement_set.requirements]
        assert dims == sorted(dims)
        assert set(dims) == {0, 1, 2, 3, 4}
        assert len(set(requirement_set.ids())) == len(requirement_set)
        assert requirement_set.phase_label == 1

    @pytest.mark.asyncio
    async def test_same_seed_same_output(self, agent_specs, run_config, hash_provider):
        first = await run_phase1(PROJECT, agent_specs, run_config, hash_provider, seed=101)
        second = await run_phase1(PROJECT, list(reversed(agent_specs)), run_config, hash_provider, seed=101)
        assert first.requirements == second.requirements

    @pytest.mark.asyncio
    async def test_requires_all_five_specs(self, agent_specs, run_config, hash_provider):
        with pytest.raises(InvalidArgumentError):
            await run_phase1(PROJECT, agent_specs[:4], run_config, hash_provider, seed=1)

    @pytest.mark.asyncio
    async def test_agent_failure_names_the_agent(self, agent_specs, run_config, hash_provider):
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, return_value="garbage"):
            with pytest.raises(PipelineError) as exc_info:
                await run_phase1(PROJECT, agent_specs, run_config, hash_provider, seed=1)
        assert exc_info.value.phase == "phase1"
        assert exc_info.value.agent == "Safety"
