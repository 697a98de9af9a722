"""
Unit tests for conflict screening and classification.
"""
import json

import pytest
from unittest.mock import AsyncMock, patch

from app.core.exceptions import ClassificationError, InvalidArgumentError, ProviderError
from app.schemas.conflict import ConflictKind
from app.services.coordinator_service import (
    CLASSIFY_RETRIES,
    FALLBACK_KIND,
    FALLBACK_SEVERITY,
    build_registry,
    classify_pair,
    detect_overlaps,
)


class TestDetectOverlaps:

    @pytest.mark.asyncio
    async def test_flags_the_latency_pair(self, latency_set, hash_provider):
        candidates = await detect_overlaps(latency_set, 0.85, hash_provider)
        assert [(c.left_id, c.right_id) for c in candidates] == [("E-TG1", "S-TG2")]
        assert candidates[0].similarity > 0.9

    @pytest.mark.asyncio
    async def test_threshold_is_strict_and_monotone(self, latency_set, hash_provider):
        loose = await detect_overlaps(latency_set, 0.05, hash_provider)
        tight = await detect_overlaps(latency_set, 0.95, hash_provider)
        assert len(loose) >= len(tight)
        assert {(c.left_id, c.right_id) for c in tight} <= {(c.left_id, c.right_id) for c in loose}
        assert all(c.left_id < c.right_id for c in loose)

    @pytest.mark.asyncio
    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.1])
    async def test_tau_outside_open_interval(self, latency_set, hash_provider, tau):
        with pytest.raises(InvalidArgumentError):
            await detect_overlaps(latency_set, tau, hash_provider)


class TestClassifyPair:

    @pytest.mark.asyncio
    async def test_severity_is_confidence_times_weight(self, latency_set, run_config, hash_provider):
        by_id = latency_set.by_id()
        answer = json.dumps({"kind": "ResourceBound", "confidence": 0.95, "rationale": "budgets"})
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, return_value=answer):
            result = await classify_pair(by_id["S-TG2"], by_id["E-TG1"], 0.93, run_config, hash_provider, seed=1)
        assert result.kind is ConflictKind.RESOURCE_BOUND
        assert result.severity == pytest.approx(0.76)

    @pytest.mark.asyncio
    async def test_pair_is_presented_in_id_order(self, latency_set, run_config, hash_provider):
        by_id = latency_set.by_id()
        answer = json.dumps({"kind": "Redundant", "confidence": 1.0})
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, return_value=answer) as mock_chat:
            await classify_pair(by_id["S-TG2"], by_id["E-TG1"], 0.93, run_config, hash_provider, seed=1)
        prompt = mock_chat.call_args.args[0].user_prompt
        assert prompt.index("E-TG1") < prompt.index("S-TG2")

    @pytest.mark.asyncio
    async def test_unparseable_answers_raise_after_retries(self, latency_set, run_config, hash_provider):
        by_id = latency_set.by_id()
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, return_value="maybe?") as mock_chat:
            with pytest.raises(ClassificationError):
                await classify_pair(by_id["E-TG1"], by_id["S-TG2"], 0.9, run_config, hash_provider, seed=1)
        assert mock_chat.call_count == CLASSIFY_RETRIES + 1


class TestBuildRegistry:

    @pytest.mark.asyncio
    async def test_registry_holds_classified_conflicts(self, latency_set, run_config, hash_provider):
        registry = await build_registry(latency_set, run_config, hash_provider, seed=101)
        assert [c.conflict_id for c in registry.conflicts] == ["E-TG1~S-TG2"]
        assert registry.conflicts[0].kind is ConflictKind.RESOURCE_BOUND
        assert registry.source_set_id.startswith("phase1:")

    @pytest.mark.asyncio
    async def test_provider_failure_degrades_to_fallback(self, latency_set, run_config, hash_provider):
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, side_effect=ProviderError("down")):
            registry = await build_registry(latency_set, run_config, hash_provider, seed=101)
        conflict = registry.conflicts[0]
        assert conflict.kind is FALLBACK_KIND
        assert conflict.severity == FALLBACK_SEVERITY
        assert "classification unavailable" in conflict.rationale
