"""
Integration tests for the five-phase pipeline.
"""
import json

import pytest

from app.core.exceptions import PipelineError, ReplayMismatchError, TranscriptExhaustedError
from app.schemas.conflict import ConflictStatus
from app.schemas.provider import ReplayExpectation
from app.schemas.requirement import RequirementSet, validate_requirement_set
from app.services.emit_service import load_gsn_xml, load_kaos_json
from app.services.pipeline_service import RUN_FILES, PipelineService, case_directory, replay
from app.services.topology_service import validate_dag


class TestPipelineFlow:
    """Offline runs with the hash provider."""

    @pytest.mark.asyncio
    async def test_run_writes_every_artifact(self, ad_case, run_config, agent_specs, clause_corpus, output_dir):
        config = run_config.with_overrides(seeds=[101, 202, 303])
        service = PipelineService(config, output_dir, specs=agent_specs, corpus=clause_corpus)

        summary = await service.run(ad_case)

        root = case_directory(output_dir, ad_case.name)
        assert root.name == "autonomous-driving"
        assert (root / "summary.json").exists()
        assert (root / "summary.csv").read_text().splitlines()[-1].startswith("Autonomous Driving,mean,")
        assert summary.seeds == [101, 202, 303]
        for seed in summary.seeds:
            directory = root / f"seed-{seed}"
            for name in RUN_FILES:
                assert (directory / name).exists(), name
            decisions = json.loads((directory / "decisions.json").read_text(encoding="utf-8"))
            assert set(decisions["resolution"]) == {
                "unaddressed_conflicts", "new_overlaps", "new_logic_findings", "passed"
            }
            assert "## Resolution validation" in (directory / "report.md").read_text(encoding="utf-8")

    @pytest.mark.asyncio
    async def test_seed_outputs_are_consistent(self, ad_case, run_config, agent_specs, clause_corpus, output_dir):
        service = PipelineService(run_config, output_dir, specs=agent_specs, corpus=clause_corpus)

        result = await service.run_seed(ad_case, 101)

        sets = result.phase_sets
        history = []
        for phase in (1, 2, 3, 4):
            saved = RequirementSet.model_validate_json(
                (result.directory / f"requirements_phase{phase}.json").read_text()
            )
            assert saved == sets[phase]
            assert validate_requirement_set(saved, history).is_empty
            history.append(saved)

        assert sets[2].descriptions() == sets[1].descriptions()
        assert sets[4].requirements == sets[3].requirements

        kaos = load_kaos_json((result.directory / "model.kaos.json").read_text())
        gsn = load_gsn_xml((result.directory / "model.gsn.xml").read_text())
        assert validate_dag(kaos).is_empty
        assert [n.id for n in gsn.nodes] == [n.id for n in kaos.nodes]
        assert set(sets[3].ids()) <= {n.id for n in kaos.nodes}

        preservation = {(p.phase_a, p.phase_b): p.score for p in result.metrics.preservation}
        assert preservation[(1, 2)] == pytest.approx(1.0)
        assert preservation[(3, 4)] == pytest.approx(1.0)
        assert 0.0 <= result.metrics.crr <= 1.0
        assert result.metrics.negotiation_steps == result.trace.total_steps

    @pytest.mark.asyncio
    async def test_runs_are_byte_identical(self, ad_case, run_config, agent_specs, clause_corpus, tmp_path):
        config = run_config.with_overrides(seeds=[101, 202])
        first = PipelineService(config, tmp_path / "a", specs=agent_specs, corpus=clause_corpus)
        second = PipelineService(config, tmp_path / "b", specs=agent_specs, corpus=clause_corpus)

        await first.run(ad_case)
        await second.run(ad_case)

        for seed in (101, 202):
            dir_a = case_directory(tmp_path / "a", ad_case.name) / f"seed-{seed}"
            dir_b = case_directory(tmp_path / "b", ad_case.name) / f"seed-{seed}"
            for name in RUN_FILES:
                assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes(), name


class TestReplay:
    """Scripted replay of the autonomous-driving negotiation."""

    @pytest.mark.asyncio
    async def test_transcript_reproduces_trajectory(self, ad_case, ad_transcript, run_config, clause_corpus, output_dir):
        result = await replay(ad_transcript, ad_case, run_config, output_dir, corpus=clause_corpus)

        rounds = result.trace.rounds_for("E-TG1~S-TG2")
        assert [r.outcome for r in rounds] == [
            ConflictStatus.UNRESOLVED, ConflictStatus.PARTIAL, ConflictStatus.CONSENSUS,
        ]
        assert result.trace.final_statuses["E-TG1~S-TG2"] is ConflictStatus.CONSENSUS
        node_ids = {n.id for n in result.model.nodes}
        assert {"S-TG2.1", "S-TG2.2", "S-TG2.3"} <= node_ids
        assert "S-TG2" not in node_ids
        assert result.compliance.logic.score == 1.0
        assert result.metrics.crr == 1.0

    @pytest.mark.asyncio
    async def test_truncated_transcript_fails(self, ad_case, ad_transcript, run_config, clause_corpus, output_dir):
        truncated = ad_transcript.model_copy(update={"turns": ad_transcript.turns[:-1]})

        with pytest.raises(PipelineError) as exc_info:
            await replay(truncated, ad_case, run_config, output_dir, corpus=clause_corpus)

        assert exc_info.value.phase == "phase2"
        assert isinstance(exc_info.value.__cause__, TranscriptExhaustedError)

    @pytest.mark.asyncio
    async def test_wrong_expectation_is_reported(self, ad_case, ad_transcript, run_config, clause_corpus, output_dir):
        expect = ReplayExpectation(final_statuses={"E-TG1~S-TG2": ConflictStatus.ESCALATED})
        altered = ad_transcript.model_copy(update={"expect": expect})

        with pytest.raises(ReplayMismatchError) as exc_info:
            await replay(altered, ad_case, run_config, output_dir, corpus=clause_corpus)

        assert "expected final status Escalated, got Consensus" in exc_info.value.divergences[0]
