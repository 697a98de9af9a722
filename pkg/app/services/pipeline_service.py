"""
Pipeline service: runs the five phases per seed and writes run artifacts.
"""
import asyncio
import csv
import io
from datetime import datetime
from pathlib import Path
from typing import Awaitable, Callable, Dict, List, Optional, TypeVar, Union

from pydantic import BaseModel
from slugify import slugify

from app.core.app_logging import log_error, log_phase_completed, pipeline_logger
from app.core.config import RunConfig
from app.core.exceptions import JudgeError, PipelineError, ProviderError, ReplayMismatchError
from app.schemas.conflict import ConflictRegistry, NegotiationTrace
from app.schemas.kaos import KaosModel
from app.schemas.metrics import MetricsReport, PhasePreservation, RunSummary
from app.schemas.provider import ClauseRecord, Transcript
from app.schemas.requirement import CaseProject, RequirementSet
from app.schemas.verification import ComplianceReport
from app.services.agent_service import AgentSpec, load_agent_specs, run_phase1
from app.services.ai_service import BaseProvider, build_provider
from app.services.coordinator_service import build_registry
from app.services.emit_service import export_gsn_xml, export_kaos_json, export_report, generate_downstream_materials
from app.services.integration_service import IntegrationResult, run_phase3
from app.services.metrics_service import (
    axis_counts,
    chv,
    crr,
    cu,
    iso29148_judge,
    mac,
    mdc,
    project_set,
    set_preservation,
    summarize_runs,
)
from app.services.negotiation_service import render_trace_markdown, run_phase2
from app.services.verification_service import load_corpus, run_phase4
from app.utils.json_utils import write_json

T = TypeVar("T")

PRESERVATION_PAIRS = ((1, 2), (1, 3), (3, 4), (1, 4))

RUN_FILES = (
    "requirements_phase1.json",
    "requirements_phase2.json",
    "requirements_phase3.json",
    "requirements_phase4.json",
    "registry.json",
    "trace.json",
    "trace.md",
    "decisions.json",
    "topology.json",
    "model.kaos.json",
    "model.gsn.xml",
    "report.md",
    "metrics.json",
    "compliance.json",
)


class SeedResult(BaseModel):
    """Outputs of one seed run."""
    seed: int
    directory: Path
    phase_sets: Dict[int, RequirementSet]
    registry: ConflictRegistry
    trace: NegotiationTrace
    model: KaosModel
    compliance: ComplianceReport
    metrics: MetricsReport


def load_case(path: Union[str, Path]) -> CaseProject:
    """Read a case project file."""
    return CaseProject.model_validate_json(Path(path).read_text(encoding="utf-8"))


def case_directory(output_root: Path, case: str) -> Path:
    return Path(output_root) / slugify(case)


class PipelineService:
    """Five-phase requirements pipeline for one case and configuration."""

    def __init__(
        self,
        config: RunConfig,
        output_root: Path,
        transcript: Optional[Transcript] = None,
        specs: Optional[List[AgentSpec]] = None,
        corpus: Optional[List[ClauseRecord]] = None,
        materials: bool = False,
    ):
        self.config = config
        self.output_root = Path(output_root)
        self.transcript = transcript
        self.specs = specs if specs is not None else load_agent_specs()
        self.corpus = corpus
        self.materials = materials

    def _corpus(self) -> List[ClauseRecord]:
        if self.corpus is None:
            self.corpus = load_corpus(self.config.corpus_path)
        return self.corpus

    async def _phase(self, name: str, seed: int, step: Callable[[], Awaitable[T]]) -> T:
        start_time = datetime.now()
        try:
            result = await step()
        except PipelineError:
            raise
        except Exception as e:
            log_error(e, {"phase": name, "seed": seed})
            log_phase_completed(name, seed, (datetime.now() - start_time).total_seconds(), "failed")
            raise PipelineError(name, str(e)) from e
        log_phase_completed(name, seed, (datetime.now() - start_time).total_seconds(), "completed")
        return result

    async def run_seed(self, project: CaseProject, seed: int) -> SeedResult:
        """Run phases 1 to 5 for one seed, writing artifacts as they are produced."""
        directory = case_directory(self.output_root, project.name) / f"seed-{seed}"
        directory.mkdir(parents=True, exist_ok=True)
        provider = build_provider(self.config, seed, self.transcript)
        config = self.config
        pipeline_logger.info(f"Running case '{project.name}' with seed {seed}", extra={"seed": seed})

        # Phase 1: generation
        phase1 = await self._phase(
            "phase1", seed, lambda: run_phase1(project.description, self.specs, config, provider, seed)
        )
        set1 = phase1.requirements
        write_json(directory / "requirements_phase1.json", set1)

        # Phase 2: conflict detection and negotiation
        registry = await self._phase("registry", seed, lambda: build_registry(set1, config, provider, seed))
        set2, registry, trace = await self._phase(
            "phase2", seed, lambda: run_phase2(set1, registry, config, provider, seed, specs=self.specs)
        )
        write_json(directory / "requirements_phase2.json", set2)
        write_json(directory / "registry.json", registry)
        write_json(directory / "trace.json", trace)
        (directory / "trace.md").write_text(render_trace_markdown(trace, registry), encoding="utf-8")

        # Phase 3: integration
        integration: IntegrationResult = await self._phase(
            "phase3", seed, lambda: run_phase3(set2, registry, trace, config, provider, seed)
        )
        set3 = integration.requirements
        write_json(directory / "requirements_phase3.json", set3)
        write_json(directory / "decisions.json", {
            "merges": [m.model_dump(mode="json") for m in integration.merges],
            "escalations": [d.model_dump(mode="json") for d in integration.decisions],
            "resolution": integration.resolution.model_dump(mode="json"),
        })
        write_json(directory / "topology.json", {
            "before_repair": integration.topology_before.model_dump(mode="json"),
            "after_repair": integration.topology_after.model_dump(mode="json"),
        })

        # Phase 4: verification, non-mutating
        compliance = await self._phase(
            "phase4", seed, lambda: run_phase4(set3, project, self._corpus(), config, provider, seed)
        )
        set4 = set3.relabel(4)
        write_json(directory / "requirements_phase4.json", set4)
        write_json(directory / "compliance.json", compliance)

        phase_sets = {1: set1, 2: set2, 3: set3, 4: set4}
        metrics = await self._phase(
            "metrics", seed,
            lambda: self.compute_metrics(project, seed, provider, phase_sets, registry, trace, compliance),
        )
        write_json(directory / "metrics.json", metrics)

        # Phase 5: formal artifacts
        model = integration.model

        async def emit() -> None:
            (directory / "model.kaos.json").write_text(export_kaos_json(model, compliance), encoding="utf-8")
            (directory / "model.gsn.xml").write_text(export_gsn_xml(model), encoding="utf-8")
            (directory / "report.md").write_text(
                export_report(
                    project.name, seed, model, trace,
                    registry=registry,
                    topology=integration.topology_after,
                    resolution=integration.resolution,
                    compliance=compliance,
                    metrics=metrics,
                ),
                encoding="utf-8",
            )
            if self.materials:
                text = await generate_downstream_materials(model, config, provider, seed)
                (directory / "materials.md").write_text(text, encoding="utf-8")

        await self._phase("phase5", seed, emit)

        return SeedResult(
            seed=seed,
            directory=directory,
            phase_sets=phase_sets,
            registry=registry,
            trace=trace,
            model=model,
            compliance=compliance,
            metrics=metrics,
        )

    async def compute_metrics(
        self,
        project: CaseProject,
        seed: int,
        provider: BaseProvider,
        phase_sets: Dict[int, RequirementSet],
        registry: ConflictRegistry,
        trace: NegotiationTrace,
        compliance: ComplianceReport,
    ) -> MetricsReport:
        """Diversity on the generated set, consistency and compliance on the verified set."""
        generated = phase_sets[1]
        vectors = await project_set(generated, self.config, provider, seed)
        volume, degenerate = chv(vectors)
        counts = axis_counts(generated)

        preservation = []
        for a, b in PRESERVATION_PAIRS:
            score = await set_preservation(phase_sets[a], phase_sets[b], provider)
            preservation.append(PhasePreservation(phase_a=a, phase_b=b, score=score.score))

        iso = None
        if len(phase_sets[4]):
            try:
                iso = await iso29148_judge(phase_sets[4], self.config, provider, seed)
            except (JudgeError, ProviderError) as e:
                pipeline_logger.warning(f"Quality judge unavailable for seed {seed}: {e}")

        return MetricsReport(
            case=project.name,
            seed=seed,
            requirement_counts={f"phase{k}": len(v) for k, v in sorted(phase_sets.items())},
            axis_counts=counts,
            chv=volume,
            chv_degenerate=degenerate,
            mdc=mdc(vectors) if vectors else 0.0,
            cu=cu(counts),
            mac=mac(counts),
            crr=crr(registry),
            s_logic=compliance.logic.score,
            compliance_coverage=compliance.coverage,
            conflicts_detected=len(registry),
            conflicts_negotiated=len(registry.negotiable()),
            negotiation_steps=trace.total_steps,
            negotiation_rounds=trace.total_rounds,
            preservation=preservation,
            iso29148=iso,
        )

    async def run(self, project: CaseProject, seeds: Optional[List[int]] = None) -> RunSummary:
        """Run every seed and write the seed-averaged summary."""
        seeds = list(seeds or self.config.seeds)
        if self.config.concurrent_seeds:
            results = await asyncio.gather(*(self.run_seed(project, s) for s in seeds))
        else:
            results = [await self.run_seed(project, s) for s in seeds]

        summary = summarize_runs(project.name, [r.metrics for r in results])
        root = case_directory(self.output_root, project.name)
        write_json(root / "summary.json", summary.model_dump(mode="json", exclude={"runs"}))
        (root / "summary.csv").write_text(summary_csv(summary), encoding="utf-8")
        pipeline_logger.info(f"Case '{project.name}' finished for seeds {seeds}")
        return summary


def summary_csv(summary: RunSummary) -> str:
    """One row per seed plus the mean row."""
    keys = sorted(summary.means)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["case", "seed"] + keys)
    for run in summary.runs:
        values = run.scalars()
        writer.writerow([summary.case, run.seed] + [f"{values[k]:.6f}" for k in keys])
    writer.writerow([summary.case, "mean"] + [f"{summary.means[k]:.6f}" for k in keys])
    return buffer.getvalue()


def check_replay(transcript: Transcript, result: SeedResult) -> List[str]:
    """Divergences between a replayed run and the transcript's expectations."""
    expect = transcript.expect
    if expect is None:
        return []

    divergences = []
    for conflict_id, statuses in sorted(expect.rounds.items()):
        actual = [r.outcome for r in result.trace.rounds_for(conflict_id)]
        if actual != statuses:
            divergences.append(
                f"{conflict_id}: expected rounds {[s.value for s in statuses]}, got {[s.value for s in actual]}"
            )
    for conflict_id, status in sorted(expect.final_statuses.items()):
        actual_status = result.trace.final_statuses.get(conflict_id)
        if actual_status is not status:
            got = actual_status.value if actual_status else "missing"
            divergences.append(f"{conflict_id}: expected final status {status.value}, got {got}")
    node_ids = set(n.id for n in result.model.nodes)
    for node_id in expect.decomposition_ids:
        if node_id not in node_ids:
            divergences.append(f"decomposition node {node_id} missing from the goal model")
    return divergences


async def replay(
    transcript: Transcript,
    project: CaseProject,
    config: RunConfig,
    output_root: Path,
    corpus: Optional[List[ClauseRecord]] = None,
) -> SeedResult:
    """Run one seed against a transcript and verify its expected trajectory."""
    seed = transcript.seed if transcript.seed is not None else config.seeds[0]
    replay_config = config.with_overrides(provider={**config.provider.model_dump(), "kind": "transcript"})
    service = PipelineService(replay_config, output_root, transcript=transcript, corpus=corpus)
    result = await service.run_seed(project, seed)

    divergences = check_replay(transcript, result)
    if divergences:
        for d in divergences:
            pipeline_logger.error(f"Replay divergence: {d}")
        raise ReplayMismatchError(divergences)
    pipeline_logger.info(f"Replay of {transcript.name} matched {len(result.trace.events)} round(s)")
    return result
