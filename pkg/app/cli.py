"""
Command-line interface: run, eval, replay and export.
"""
import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from app.core.app_logging import app_logger, setup_logging
from app.core.config import ProviderConfig, RunConfig, load_run_config
from app.core.exceptions import (
    ExportError,
    PipelineError,
    ProviderError,
    ReplayMismatchError,
    TranscriptExhaustedError,
)
from app.schemas.conflict import NegotiationTrace
from app.schemas.requirement import QualityVector, RequirementSet
from app.services.ai_service import build_provider
from app.services.emit_service import export_gsn_xml, export_kaos_json, export_report, load_kaos_json
from app.services.metrics_service import (
    axis_counts,
    chv,
    cu,
    mac,
    mdc,
    preservation_from_matrix,
    project_set,
    set_preservation,
)
from app.services.mock_providers import load_transcript
from app.services.pipeline_service import PipelineService, case_directory, load_case, replay
from app.utils.json_utils import dumps_canonical, write_json


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

RUNTIME_ERRORS = (PipelineError, ProviderError, TranscriptExhaustedError, ReplayMismatchError)
INPUT_ERRORS = (ValueError, OSError, ExportError)


def parse_seeds(value: str) -> List[int]:
    try:
        seeds = [int(s) for s in value.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {value!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def parse_provider(value: str) -> Dict[str, Any]:
    """Turn ``http``, ``hash-mock`` or ``transcript:<file>`` into provider fields."""
    if value in ("http", "hash-mock"):
        return {"kind": value}
    if value.startswith("transcript:") and len(value) > len("transcript:"):
        return {"kind": "transcript", "transcript_path": value.split(":", 1)[1]}
    raise argparse.ArgumentTypeError(f"unknown provider {value!r}; use http, hash-mock or transcript:<file>")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file plus command-line overrides."""
    config = load_run_config(Path(args.config) if args.config else None)
    changes: Dict[str, Any] = {}
    if getattr(args, "provider", None):
        changes["provider"] = ProviderConfig.model_validate(
            {**config.provider.model_dump(), **args.provider}
        ).model_dump()
    if getattr(args, "seeds", None):
        changes["seeds"] = args.seeds
    return config.with_overrides(**changes) if changes else config


def _load_requirement_set(path: str) -> RequirementSet:
    return RequirementSet.model_validate_json(Path(path).read_text(encoding="utf-8"))


def _load_json(path: str) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _load_vectors(path: str) -> List[QualityVector]:
    rows = _load_json(path)
    if not isinstance(rows, list):
        raise ValueError(f"{path}: expected a list of five-component quality vectors")
    return [QualityVector(components=row) for row in rows]


# Commands

async def cmd_run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    project = load_case(args.case)
    service = PipelineService(config, Path(args.out), materials=args.materials)
    summary = await service.run(project)
    root = case_directory(Path(args.out), project.name)
    print(f"{project.name}: {len(summary.seeds)} seed(s) written to {root}")
    return EXIT_OK


async def cmd_eval(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    seed = config.seeds[0]
    result: Dict[str, Any] = {}

    set_a = _load_requirement_set(args.requirements_a) if args.requirements_a else None
    set_b = _load_requirement_set(args.requirements_b) if args.requirements_b else None
    needs_provider = args.similarity == "provider" or (set_a is not None and args.vectors is None)
    provider = build_provider(config, seed) if needs_provider else None

    points: Optional[List[QualityVector]] = None
    if args.vectors:
        points = _load_vectors(args.vectors)
    elif set_a is not None and len(set_a):
        points = await project_set(set_a, config, provider, seed)
    if points is not None:
        volume, degenerate = chv(points)
        result.update(chv=volume, chv_degenerate=degenerate, mdc=mdc(points) if len(points) else 0.0)

    if set_a is not None:
        counts = axis_counts(set_a)
        result.update(axis_counts=list(counts.counts), cu=cu(counts), mac=mac(counts))

    if args.similarity_matrix:
        score = preservation_from_matrix(_load_json(args.similarity_matrix))
        result["preservation"] = score.model_dump(mode="json")
    elif set_a is not None and set_b is not None:
        score = await set_preservation(set_a, set_b, provider if args.similarity == "provider" else None)
        result["preservation"] = score.model_dump(mode="json")

    if not result:
        raise ValueError("nothing to evaluate: pass requirement sets, --vectors or --similarity-matrix")

    path = write_json(Path(args.out) / "metrics.json", result)
    sys.stdout.write(dumps_canonical(result))
    app_logger.info(f"Evaluation written to {path}")
    return EXIT_OK


async def cmd_replay(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    transcript = load_transcript(args.transcript)
    project = load_case(args.case)
    result = await replay(transcript, project, config, Path(args.out))
    print(f"replay {transcript.name} matched: {len(result.trace.events)} round(s), outputs in {result.directory}")
    return EXIT_OK


async def cmd_export(args: argparse.Namespace) -> int:
    model = load_kaos_json(Path(args.model).read_text(encoding="utf-8"))
    if args.format == "gsn":
        text = export_gsn_xml(model)
    elif args.format == "kaos":
        text = export_kaos_json(model)
    else:
        trace = NegotiationTrace.model_validate(_load_json(args.trace)) if args.trace else NegotiationTrace()
        text = export_report(args.case_name, args.seed, model, trace)

    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reqneg",
        description="Multi-agent quality requirements generation, negotiation and verification",
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default from settings)")
    parser.add_argument("--log-file", default=None, help="Also write the run log to this file")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", help="Run configuration JSON file")
        sub.add_argument("--provider", type=parse_provider, help="http, hash-mock or transcript:<file>")
        sub.add_argument("--seeds", type=parse_seeds, help="Comma-separated seeds, e.g. 101,202,303")
        sub.add_argument("--out", default="out", help="Output directory")

    run = commands.add_parser("run", help="Run the five-phase pipeline for every seed")
    run.add_argument("case", help="Case project JSON file")
    run.add_argument("--materials", action="store_true", help="Also generate downstream materials")
    common(run)
    run.set_defaults(handler=cmd_run)

    evaluate = commands.add_parser("eval", help="Compute metrics on saved requirement sets")
    evaluate.add_argument("requirements_a", nargs="?", help="Requirement set JSON")
    evaluate.add_argument("requirements_b", nargs="?", help="Second requirement set JSON for preservation")
    evaluate.add_argument("--vectors", help="JSON list of 5-D quality vectors")
    evaluate.add_argument("--similarity", choices=["exact", "provider"], default="exact",
                          help="Similarity used for preservation")
    evaluate.add_argument("--similarity-matrix", help="JSON similarity matrix to match directly")
    common(evaluate)
    evaluate.set_defaults(handler=cmd_eval)

    replay_cmd = commands.add_parser("replay", help="Replay a transcript and check its expected trajectory")
    replay_cmd.add_argument("transcript", help="Transcript JSON file")
    replay_cmd.add_argument("case", help="Case project JSON file")
    common(replay_cmd)
    replay_cmd.set_defaults(handler=cmd_replay)

    export = commands.add_parser("export", help="Re-render artifacts from a saved KAOS model")
    export.add_argument("model", help="model.kaos.json file")
    export.add_argument("--format", choices=["gsn", "kaos", "report"], default="gsn")
    export.add_argument("--trace", help="trace.json to include in a report")
    export.add_argument("--case-name", default="case", help="Case name shown in a report")
    export.add_argument("--seed", type=int, default=0, help="Seed shown in a report")
    export.add_argument("--out", help="Output file (stdout when omitted)")
    export.set_defaults(handler=cmd_export)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level, args.log_file)

    try:
        return asyncio.run(args.handler(args))
    except RUNTIME_ERRORS as e:
        app_logger.error(f"{args.command} failed: {e}")
        if isinstance(e, PipelineError) and isinstance(e.__cause__, TranscriptExhaustedError):
            app_logger.error(f"transcript exhausted while running {e.phase}")
        return EXIT_FAILURE
    except INPUT_ERRORS as e:
        app_logger.error(f"{args.command}: invalid input: {e}")
        return EXIT_USAGE
