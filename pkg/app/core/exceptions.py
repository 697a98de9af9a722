"""
Exception hierarchy for the requirements pipeline.
"""
from typing import Any, List, Optional


class ReqNegError(Exception):
    """Base class for pipeline errors."""


class InvalidArgumentError(ReqNegError, ValueError):
    """A precondition on an argument was violated."""


class ProviderError(ReqNegError):
    """A model provider call failed."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class ProviderTransportError(ProviderError):
    """Transport-level failure; safe to retry."""

    def __init__(self, message: str):
        super().__init__(message, retryable=True)


class DecodeError(ProviderError):
    """A provider response could not be decoded."""


class TranscriptExhaustedError(ReqNegError):
    """A scripted transcript has no turn left for a scripted task."""

    def __init__(self, task: str, haystack_head: str):
        super().__init__(f"transcript exhausted for task '{task}': {haystack_head[:120]!r}")
        self.task = task


class AgentOutputError(ReqNegError):
    """An agent response stayed unparseable after repair attempts."""

    def __init__(self, agent: str, raw_text: str):
        super().__init__(f"agent {agent} produced unparseable output")
        self.agent = agent
        self.raw_text = raw_text


class PipelineError(ReqNegError):
    """A pipeline phase failed."""

    def __init__(self, phase: str, message: str, agent: Optional[str] = None):
        prefix = f"{phase} failed" + (f" (agent {agent})" if agent else "")
        super().__init__(f"{prefix}: {message}")
        self.phase = phase
        self.agent = agent


class ClassificationError(ReqNegError):
    """Conflict classification output was unusable."""


class ProjectionError(ReqNegError):
    """Quality projection output was unusable."""


class JudgeError(ReqNegError):
    """Quality judge output was unusable."""


class IntegrationError(ReqNegError):
    """Phase-3 integration could not apply a change."""


class TopologyError(ReqNegError):
    """Goal model stayed invalid after repair."""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class ExportError(ReqNegError):
    """A model could not be exported."""


class ReplayMismatchError(ReqNegError):
    """A replay diverged from the expectations stored in its transcript."""

    def __init__(self, divergences: List[str]):
        super().__init__("replay diverged: " + "; ".join(divergences))
        self.divergences = divergences
