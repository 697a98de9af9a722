"""
Provider request, response and corpus schemas.
"""
import json
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.conflict import ConflictStatus


class ChatRequest(BaseModel):
    """One chat-completion request."""
    model_config = ConfigDict(frozen=True)

    system_prompt: str
    user_prompt: str
    temperature: float = Field(default=0.7, ge=0.0)
    max_tokens: int = Field(default=4000, ge=1)
    seed: int = 0
    task: str = Field(default="generic", description="Pipeline task issuing the call")
    persona: str = Field(default="", description="Agent or judge persona")


class EmbeddingVector(BaseModel):
    """Dense text embedding."""
    model_config = ConfigDict(frozen=True)

    values: List[float]
    model_id: str


class ClauseRecord(BaseModel):
    """One standard clause in the compliance corpus."""
    model_config = ConfigDict(frozen=True)

    clause_id: str = Field(..., min_length=1)
    text: str = Field(..., min_length=1)
    domain_tags: List[str] = Field(default_factory=list)
    context: str = Field(default="", description="Neighbouring paragraphs and definitions")


class TranscriptTurn(BaseModel):
    """A scripted provider response; structured responses are sent as JSON text."""
    task: Optional[str] = None
    match_hint: str = ""
    response: Union[str, Dict[str, Any], List[Any]]

    @property
    def text(self) -> str:
        if isinstance(self.response, str):
            return self.response
        return json.dumps(self.response, ensure_ascii=False)


class ReplayExpectation(BaseModel):
    """Outcomes a replay must reproduce."""
    rounds: Dict[str, List[ConflictStatus]] = Field(default_factory=dict)
    final_statuses: Dict[str, ConflictStatus] = Field(default_factory=dict)
    decomposition_ids: List[str] = Field(default_factory=list)


class Transcript(BaseModel):
    """Scripted turns for the transcript provider.

    Tasks listed in ``scripted_tasks`` must be answered by a turn; other tasks
    use a matching turn when one exists and fall back to hash responses.
    """
    name: str = "transcript"
    seed: Optional[int] = None
    scripted_tasks: List[str] = Field(default_factory=lambda: ["*"])
    turns: List[TranscriptTurn] = Field(default_factory=list)
    expect: Optional[ReplayExpectation] = None

    def is_scripted(self, task: str) -> bool:
        return "*" in self.scripted_tasks or task in self.scripted_tasks
