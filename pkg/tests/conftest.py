"""
Testing configuration and fixtures.
"""
from pathlib import Path
from typing import Callable, List, Optional

import pytest

from app.core.config import DATA_DIR, ProviderConfig, RunConfig
from app.schemas.provider import ClauseRecord, Transcript
from app.schemas.requirement import CaseProject, KaosLevel, QualityDimension, Requirement, RequirementSet
from app.services.agent_service import AgentSpec, load_agent_specs
from app.services.mock_providers import HashMockProvider, load_transcript
from app.services.pipeline_service import load_case
from app.services.verification_service import load_corpus


AD_CASE_PATH = DATA_DIR / "cases" / "autonomous_driving.json"
AD_TRANSCRIPT_PATH = DATA_DIR / "transcripts" / "autonomous_driving.json"
CORPUS_PATH = DATA_DIR / "clauses" / "synthetic_mini.jsonl"


@pytest.fixture
def run_config() -> RunConfig:
    """Offline configuration with a single seed."""
    return RunConfig(seeds=[101], provider=ProviderConfig(kind="hash-mock"))


@pytest.fixture
def hash_provider() -> HashMockProvider:
    return HashMockProvider(seed=101)


@pytest.fixture(scope="session")
def agent_specs() -> List[AgentSpec]:
    return load_agent_specs()


@pytest.fixture(scope="session")
def clause_corpus() -> List[ClauseRecord]:
    return load_corpus(CORPUS_PATH)


@pytest.fixture
def ad_case() -> CaseProject:
    return load_case(AD_CASE_PATH)


@pytest.fixture
def ad_transcript() -> Transcript:
    return load_transcript(AD_TRANSCRIPT_PATH)


@pytest.fixture
def make_requirement() -> Callable[..., Requirement]:
    """Factory for requirements with sensible defaults."""

    def factory(
        requirement_id: str,
        description: str,
        dimension: QualityDimension = QualityDimension.SAFETY,
        level: Optional[KaosLevel] = None,
        phase: int = 1,
        ancestry: Optional[List[str]] = None,
    ) -> Requirement:
        if level is None:
            level = KaosLevel.parse(requirement_id.split("-")[-1][:2].split(".")[0])
        return Requirement(
            id=requirement_id,
            description=description,
            dimension=dimension,
            level=level,
            rationale=f"rationale for {requirement_id}",
            source_agent=dimension.value,
            phase_of_origin=phase,
            ancestry=ancestry or [],
        )

    return factory


@pytest.fixture
def latency_set(make_requirement) -> RequirementSet:
    """Small set carrying the fusion-latency conflict."""
    return RequirementSet(
        requirements=[
            make_requirement("S-SG1", "The vehicle shall avoid collisions with other road users."),
            make_requirement("S-TG1", "Sensor faults shall be detected and isolated before planning."),
            make_requirement("S-TG2", "Sensor fusion latency shall be at most 500 ms for the perception output stage."),
            make_requirement(
                "E-SG1",
                "Trajectory planning shall keep a fast update cycle on the on-board computer.",
                QualityDimension.EFFICIENCY,
            ),
            make_requirement(
                "E-TG1",
                "Sensor fusion latency shall be at most 30 ms for the perception output stage.",
                QualityDimension.EFFICIENCY,
            ),
        ],
        phase_label=1,
    )


@pytest.fixture
def output_dir(tmp_path: Path) -> Path:
    return tmp_path / "out"
