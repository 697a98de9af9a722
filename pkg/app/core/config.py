"""
Application configuration settings.
"""
import math
from functools import lru_cache
from pathlib import Path
from typing import List, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.exceptions import InvalidArgumentError


DATA_DIR = Path(__file__).resolve().parent.parent / "data"
DEFAULT_CLAUSE_CORPUS = DATA_DIR / "clauses" / "synthetic_mini.jsonl"
AGENT_COUNT = 5


class Settings(BaseSettings):
    """Process-level settings read from the environment."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_name: str = Field(default="Requirements Negotiator", description="Application name")
    version: str = Field(default="1.0.0", description="Application version")
    environment: str = Field(default="development", description="Environment (development, staging, production)")

    # AI Services
    openai_api_key: Optional[str] = Field(default=None, description="OpenAI API key")
    anthropic_api_key: Optional[str] = Field(default=None, description="Anthropic API key")

    # Logging
    log_level: str = Field(default="INFO", description="Logging level")
    log_format: str = Field(
        default="%(asctime)s %(levelname)s %(name)s [seed=%(seed)s phase=%(phase)s] %(message)s",
        description="Log format; seed and phase are filled from the run context"
    )

    @property
    def is_development(self) -> bool:
        """Check if running in development mode."""
        return self.environment == "development"


@lru_cache()
def get_settings() -> Settings:
    """Get cached application settings."""
    return Settings()


# Global settings instance
settings = get_settings()


def new_uniform_weights(n: int) -> List[float]:
    """Return n priority weights each equal to 1/n."""
    if n < 1:
        raise InvalidArgumentError(f"agent count must be at least 1, got {n}")
    return [1.0 / n] * n


def check_weights(weights: Sequence[float]) -> List[float]:
    """Validate agent priority weights: one per agent, non-negative, summing to one."""
    values = [float(w) for w in weights]
    if len(values) != AGENT_COUNT:
        raise InvalidArgumentError(f"expected {AGENT_COUNT} weights, got {len(values)}")
    if any(w < 0 or not math.isfinite(w) for w in values):
        raise InvalidArgumentError("weights must be finite and non-negative")
    if abs(sum(values) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"weights must sum to 1, got {sum(values)!r}")
    return values


class ProviderConfig(BaseModel):
    """Model provider selection and transport parameters."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["http", "hash-mock", "transcript"] = Field(
        default="http", description="Provider implementation"
    )
    transcript_path: Optional[str] = Field(default=None, description="Transcript file for the transcript provider")
    base_url: Optional[str] = Field(default=None, description="Chat-completion endpoint base URL")
    chat_model: str = Field(default="gpt-4o-mini", description="Chat model identifier")
    embedding_model: str = Field(default="bert-base-uncased", description="Embedding and similarity model")
    api_key_env: str = Field(default="OPENAI_API_KEY", description="Environment variable holding the bearer token")
    max_retries: int = Field(default=3, ge=0, description="Retries on transport failure")
    backoff_base: float = Field(default=0.5, ge=0.0, description="Exponential backoff base in seconds")
    timeout_seconds: float = Field(default=120.0, gt=0.0, description="HTTP timeout in seconds")


class RunConfig(BaseModel):
    """Configuration of one experiment run, loaded from a JSON file."""

    model_config = ConfigDict(frozen=True)

    weights: List[float] = Field(
        default_factory=lambda: new_uniform_weights(AGENT_COUNT),
        description="Agent priority weights in dimension order",
    )
    tau_overlap: float = Field(default=0.85, description="Similarity threshold for conflict screening")
    tau_dup: float = Field(default=0.92, description="Similarity threshold for Phase-3 deduplication")
    epsilon: float = Field(default=0.05, description="Convergence slack between successive syntheses")
    round_cap: int = Field(default=3, ge=1, description="Maximum negotiation rounds per conflict")
    temperature: float = Field(default=0.7, ge=0.0, description="Decoding temperature")
    max_tokens: int = Field(default=4000, ge=1, description="Completion token limit")
    seeds: List[int] = Field(default_factory=lambda: [101, 202, 303], min_length=1, description="Run seeds")
    top_k: int = Field(default=5, ge=1, description="Retrieval depth for compliance checking")
    per_agent_budget: int = Field(default=12, ge=1, description="Maximum requirements kept per agent")
    reprompt_attempts: int = Field(default=2, ge=0, description="Repair re-prompts for malformed output")
    judge_votes: int = Field(default=3, ge=1, description="Self-consistency votes per clause")
    clause_corpus: Optional[str] = Field(default=None, description="Clause corpus path (JSON lines)")
    concurrent_seeds: bool = Field(default=True, description="Run seeds concurrently")
    provider: ProviderConfig = Field(default_factory=ProviderConfig)

    @field_validator("weights")
    @classmethod
    def validate_weights(cls, v: List[float]) -> List[float]:
        """Weights are one per agent, non-negative and sum to one."""
        return check_weights(v)

    @field_validator("tau_overlap", "tau_dup", "epsilon")
    @classmethod
    def validate_open_unit(cls, v: float) -> float:
        """Thresholds lie strictly inside (0, 1)."""
        if not 0.0 < v < 1.0:
            raise ValueError(f"value must lie in (0, 1), got {v}")
        return v

    @property
    def corpus_path(self) -> Path:
        return Path(self.clause_corpus) if self.clause_corpus else DEFAULT_CLAUSE_CORPUS

    def with_overrides(self, **changes: object) -> "RunConfig":
        """Return a validated copy with the given fields replaced."""
        data = self.model_dump()
        data.update(changes)
        return RunConfig.model_validate(data)


def _relative_to(base: Path, value: Optional[str]) -> Optional[str]:
    if value is None or Path(value).is_absolute():
        return value
    return str(base / value)


def load_run_config(path: Optional[Path]) -> RunConfig:
    """Load a run configuration file, or the defaults when no path is given.

    Relative corpus and transcript paths are taken relative to the file's directory.
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    config = RunConfig.model_validate_json(path.read_text(encoding="utf-8"))
    base = path.parent
    provider = config.provider.model_copy(
        update={"transcript_path": _relative_to(base, config.provider.transcript_path)}
    )
    return config.model_copy(
        update={"clause_corpus": _relative_to(base, config.clause_corpus), "provider": provider}
    )
