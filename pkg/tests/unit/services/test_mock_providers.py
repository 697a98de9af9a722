"""
Unit tests for the offline providers.
"""
import json

import numpy as np
import pytest

from app.core import prompts as P
from app.core.exceptions import TranscriptExhaustedError
from app.schemas.provider import ChatRequest, Transcript, TranscriptTurn
from app.services.mock_providers import HashMockProvider, TranscriptMockProvider, load_transcript


def _request(task, user_prompt="", persona="", seed=101):
    return ChatRequest(system_prompt="system", user_prompt=user_prompt, task=task, persona=persona, seed=seed)


class TestHashMockProvider:

    @pytest.mark.asyncio
    async def test_responses_are_deterministic(self, hash_provider):
        request = _request(P.Task.GENERATE, "A drone delivery system.", persona="Safety")
        first = await hash_provider.chat(request)
        second = await HashMockProvider(seed=101).chat(request)
        assert first == second

    @pytest.mark.asyncio
    async def test_generation_plants_shared_latency_item(self, hash_provider):
        raw = await hash_provider.chat(_request(P.Task.GENERATE, "A drone delivery system.", persona="Efficiency"))
        items = json.loads(raw)
        assert 4 <= len(items) <= 7
        assert "at most 50 ms" in items[0]["description"]
        assert all({"id", "description", "level", "rationale"} <= set(i) for i in items)

    @pytest.mark.asyncio
    async def test_generation_for_unknown_persona_is_empty(self, hash_provider):
        assert await hash_provider.chat(_request(P.Task.GENERATE, "x", persona="Nobody")) == "[]"

    @pytest.mark.asyncio
    async def test_embeddings_are_unit_vectors(self, hash_provider):
        vectors = await hash_provider.embed(["sensor fusion latency", "energy budget"])
        for v in vectors:
            assert np.linalg.norm(v.values) == pytest.approx(1.0)

    @pytest.mark.asyncio
    async def test_classify_different_budgets_as_resource_bound(self, hash_provider):
        prompt = "\n".join([
            f"{P.LEFT_MARKER} E-TG1 | Efficiency | Tactical | Latency at most 30 ms",
            f"{P.RIGHT_MARKER} S-TG2 | Safety | Tactical | Latency at most 500 ms",
        ])
        answer = json.loads(await hash_provider.chat(_request(P.Task.CLASSIFY, prompt)))
        assert answer["kind"] == "ResourceBound"

    @pytest.mark.asyncio
    async def test_projection_is_biased_by_keywords(self, hash_provider):
        answer = json.loads(await hash_provider.chat(_request(P.Task.PROJECT, "collision hazard braking fault")))
        assert set(answer) == {"safety", "efficiency", "sustainability", "trustworthiness", "responsibility"}
        assert answer["safety"] >= 0.5

    @pytest.mark.asyncio
    async def test_hallucination_judge_checks_retrieved_ids(self, hash_provider):
        prompt = "\n".join([
            f"{P.REQUIREMENT_MARKER} R-TG1 | follow ISO 26262-5",
            f"{P.REFERENCE_MARKER} ISO26262-5",
            f"{P.REFERENCE_MARKER} ISO9999",
            f"{P.RETRIEVED_CLAUSE_MARKER} ISO26262-5:7.4.1 | text",
        ])
        answer = json.loads(await hash_provider.chat(_request(P.Task.HALLUCINATION, prompt)))
        assert answer["supported"] is False
        assert "ISO9999" in answer["rationale"]

    @pytest.mark.asyncio
    async def test_synthesis_follows_request_seed(self):
        prompt = "\n".join([
            f"{P.CONFLICT_MARKER} E-TG1~S-TG2",
            f"{P.ROUND_MARKER} 1",
            f"{P.FOCAL_MARKER} S-TG2 | Latency at most 500 ms",
        ])
        answers = [
            await HashMockProvider(seed=0).chat(_request(P.Task.SYNTHESIZE, prompt, seed=seed))
            for seed in range(10)
        ]
        assert len(set(answers)) > 1

        request = _request(P.Task.SYNTHESIZE, prompt, seed=7)
        assert await HashMockProvider(seed=1).chat(request) == await HashMockProvider(seed=2).chat(request)


class TestTranscriptMockProvider:

    @pytest.fixture
    def transcript(self):
        return Transcript(
            name="t",
            scripted_tasks=["thesis"],
            turns=[
                TranscriptTurn(task="thesis", match_hint="Round: 1", response="first"),
                TranscriptTurn(task="thesis", match_hint="Round: 1", response="second"),
                TranscriptTurn(task="classify", match_hint="E-TG1", response={"kind": "Redundant"}),
            ],
        )

    @pytest.mark.asyncio
    async def test_turns_are_consumed_in_order(self, transcript):
        provider = TranscriptMockProvider(transcript, seed=1)
        assert await provider.chat(_request("thesis", "Round: 1")) == "first"
        assert await provider.chat(_request("thesis", "Round: 1")) == "second"
        assert provider.remaining_turns == 1

    @pytest.mark.asyncio
    async def test_structured_response_is_sent_as_json(self, transcript):
        provider = TranscriptMockProvider(transcript, seed=1)
        raw = await provider.chat(_request("classify", "Requirement A: E-TG1 | ..."))
        assert json.loads(raw) == {"kind": "Redundant"}

    @pytest.mark.asyncio
    async def test_scripted_task_without_turn_raises(self, transcript):
        provider = TranscriptMockProvider(transcript, seed=1)
        with pytest.raises(TranscriptExhaustedError):
            await provider.chat(_request("thesis", "Round: 2"))

    @pytest.mark.asyncio
    async def test_unscripted_task_falls_back_to_hash(self, transcript):
        provider = TranscriptMockProvider(transcript, seed=1)
        request = _request(P.Task.PROJECT, "energy footprint", seed=1)
        assert await provider.chat(request) == await HashMockProvider(seed=1).chat(request)

    def test_load_bare_turn_list(self, tmp_path):
        path = tmp_path / "turns.json"
        path.write_text(json.dumps([{"task": "thesis", "response": "x"}]))
        transcript = load_transcript(path)
        assert transcript.name == "turns"
        assert transcript.is_scripted("anything")

    def test_packaged_transcript_loads(self, ad_transcript):
        assert ad_transcript.seed == 101
        assert ad_transcript.expect.decomposition_ids == ["S-TG2.1", "S-TG2.2", "S-TG2.3"]
        assert not ad_transcript.is_scripted(P.Task.STITCH)
