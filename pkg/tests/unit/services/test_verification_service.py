"""
Unit tests for Phase-4 verification.
"""
import json

import pytest
from unittest.mock import AsyncMock, patch

from app.core import prompts as P
from app.core.exceptions import InvalidArgumentError, ProviderError
from app.schemas.provider import ClauseRecord
from app.schemas.requirement import CaseProject, QualityDimension
from app.schemas.verification import ComplianceLabel, ComplianceVerdict, majority_label
from app.services.verification_service import (
    compliance_coverage,
    filter_applicable,
    hallucination_check,
    judge_clause,
    run_phase4,
)


SAT, PART, NOT = ComplianceLabel.SATISFIED, ComplianceLabel.PARTIALLY, ComplianceLabel.NOT_SATISFIED

PROJECT = CaseProject(name="Shuttle", description="Campus shuttle.", domain_tags=["automotive"])

CLAUSES = [
    ClauseRecord(clause_id="ISO26262-4:6.4.1", text="Sensor faults shall be detected. Detail follows.",
                 domain_tags=["automotive", "safety"]),
    ClauseRecord(clause_id="ISO26262-5:7.4.1", text="Hardware faults shall be controlled.",
                 domain_tags=["automotive"]),
    ClauseRecord(clause_id="ISO27001:A.8.1", text="Assets shall be inventoried.", domain_tags=["security"]),
]


def _verdict(label):
    return ComplianceVerdict(clause_id="c", label=label, votes=[label])


def _clause_of(request):
    for line in request.user_prompt.splitlines():
        if line.startswith(P.CLAUSE_MARKER):
            return line[len(P.CLAUSE_MARKER):].strip()
    return ""


class TestVoting:

    @pytest.mark.parametrize("votes, expected", [
        ([SAT, SAT, NOT], SAT),
        ([PART, PART, PART], PART),
        ([SAT, PART, NOT], NOT),
        ([SAT, PART], NOT),
        ([], NOT),
    ])
    def test_majority_label(self, votes, expected):
        assert majority_label(votes) is expected

    def test_label_aliases(self):
        assert ComplianceLabel.parse("partial") is PART
        assert ComplianceLabel.parse("Not Satisfied") is NOT
        with pytest.raises(ValueError):
            ComplianceLabel.parse("maybe")

    def test_verdict_must_match_votes(self):
        with pytest.raises(ValueError):
            ComplianceVerdict(clause_id="c", label=SAT, votes=[NOT, NOT, SAT])

    def test_coverage(self):
        assert compliance_coverage([_verdict(SAT), _verdict(PART), _verdict(NOT), _verdict(SAT)]) == 0.75
        assert compliance_coverage([]) == 1.0


class TestApplicability:

    @pytest.mark.asyncio
    async def test_tag_filter_then_classifier(self, run_config, hash_provider):
        async def answer(request):
            return json.dumps({"applicable": _clause_of(request) == "ISO26262-4:6.4.1", "justification": "j"})

        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, side_effect=answer) as mock_chat:
            applicable, decisions = await filter_applicable(CLAUSES, PROJECT, run_config, hash_provider, seed=1)

        assert [c.clause_id for c in applicable] == ["ISO26262-4:6.4.1"]
        assert mock_chat.call_count == 2
        stages = {d.clause_id: d.stage for d in decisions}
        assert stages["ISO27001:A.8.1"] == "tag-filter"
        assert stages["ISO26262-5:7.4.1"] == "classifier"

    @pytest.mark.asyncio
    async def test_classifier_failure_keeps_clause(self, run_config, hash_provider):
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, side_effect=ProviderError("down")):
            applicable, decisions = await filter_applicable(CLAUSES, PROJECT, run_config, hash_provider, seed=1)
        assert len(applicable) == 2
        assert {d.stage for d in decisions} == {"fallback", "tag-filter"}

    @pytest.mark.asyncio
    async def test_empty_corpus(self, run_config, hash_provider):
        with pytest.raises(InvalidArgumentError):
            await filter_applicable([], PROJECT, run_config, hash_provider, seed=1)


class TestJudgeClause:

    @pytest.mark.asyncio
    async def test_votes_are_aggregated(self, latency_set, run_config, hash_provider):
        answers = [
            json.dumps({"label": "Satisfied", "best_requirement_id": "S-TG1", "citation": "Sensor faults shall be detected."}),
            json.dumps({"label": "NotSatisfied", "best_requirement_id": "S-TG1"}),
            json.dumps({"label": "Satisfied", "best_requirement_id": "X-9", "citation": "made up"}),
        ]
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, side_effect=answers) as mock_chat:
            verdict = await judge_clause(CLAUSES[0], latency_set, run_config, hash_provider, seed=10)

        assert verdict.label is SAT
        assert verdict.votes == [SAT, NOT, SAT]
        assert verdict.best_requirement_id == "S-TG1"
        assert verdict.citation == "Sensor faults shall be detected."
        assert [c.args[0].seed for c in mock_chat.call_args_list] == [10, 11, 12]

    @pytest.mark.asyncio
    async def test_invented_citation_is_replaced(self, latency_set, run_config, hash_provider):
        answer = json.dumps({"label": "Partially", "best_requirement_id": "Z-1", "citation": "made up"})
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, return_value=answer):
            verdict = await judge_clause(CLAUSES[0], latency_set, run_config, hash_provider, seed=1)

        assert verdict.label is PART
        assert verdict.citation == "Sensor faults shall be detected."
        assert verdict.best_requirement_id is None

    @pytest.mark.asyncio
    async def test_all_votes_failing(self, latency_set, run_config, hash_provider):
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock, side_effect=ProviderError("down")):
            verdict = await judge_clause(CLAUSES[0], latency_set, run_config, hash_provider, seed=1)
        assert verdict.label is NOT
        assert verdict.error == "all verifier calls failed"


class TestHallucination:

    @pytest.mark.asyncio
    async def test_supported_reference(self, make_requirement, run_config, hash_provider):
        requirement = make_requirement("R-TG1", "Hardware faults shall be handled per ISO 26262-5.",
                                       QualityDimension.RESPONSIBILITY)
        result = await hallucination_check(requirement, CLAUSES, run_config, hash_provider, seed=1)
        assert result.references == ["ISO26262-5"]
        assert not result.flagged
        assert "ISO26262-5:7.4.1" in result.nearest_clauses

    @pytest.mark.asyncio
    async def test_unknown_reference_is_flagged(self, make_requirement, run_config, hash_provider):
        requirement = make_requirement("R-TG1", "Logging shall follow ISO 99999.", QualityDimension.RESPONSIBILITY)
        result = await hallucination_check(requirement, CLAUSES, run_config, hash_provider, seed=1)
        assert result.flagged
        assert "ISO99999" in result.rationale

    @pytest.mark.asyncio
    async def test_requirement_without_references_is_skipped(self, make_requirement, run_config, hash_provider):
        requirement = make_requirement("S-TG1", "Detect sensor faults.")
        with patch.object(hash_provider, 'chat', new_callable=AsyncMock) as mock_chat:
            result = await hallucination_check(requirement, CLAUSES, run_config, hash_provider, seed=1)
        assert result.skipped
        mock_chat.assert_not_called()


class TestRunPhase4:

    @pytest.mark.asyncio
    async def test_report_over_packaged_corpus(self, latency_set, ad_case, clause_corpus, run_config, hash_provider):
        report = await run_phase4(latency_set, ad_case, clause_corpus, run_config, hash_provider, seed=101)

        assert len(report.applicability) == len(clause_corpus)
        applicable = [d.clause_id for d in report.applicability if d.applicable]
        assert sorted(v.clause_id for v in report.verdicts) == sorted(applicable)
        assert 0.0 <= report.coverage <= 1.0
        assert [h.requirement_id for h in report.hallucinations] == latency_set.ids()
        assert report.logic.comparable_pairs == 1
        assert report.logic.score == 1.0
