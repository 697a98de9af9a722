"""
AI provider service: chat completion, embeddings and similarity scoring.
"""
import asyncio
import os
from abc import ABC, abstractmethod
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

import anthropic
import httpx
import numpy as np
import openai
from anthropic import AsyncAnthropic
from openai import AsyncOpenAI

from app.core.app_logging import ai_logger, log_ai_request, log_error
from app.core.config import ProviderConfig, RunConfig, settings
from app.core.exceptions import (
    DecodeError,
    InvalidArgumentError,
    ProviderError,
    ProviderTransportError,
)
from app.schemas.provider import ChatRequest, EmbeddingVector, Transcript


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity; zero vectors score 0."""
    va = np.asarray(a, dtype=float)
    vb = np.asarray(b, dtype=float)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(va, vb) / (na * nb))


def cosine_matrix(vectors: Sequence[EmbeddingVector]) -> np.ndarray:
    """Pairwise cosine similarities of a batch of embeddings."""
    if not vectors:
        return np.zeros((0, 0))
    m = np.asarray([v.values for v in vectors], dtype=float)
    norms = np.linalg.norm(m, axis=1)
    norms[norms == 0.0] = 1.0
    unit = m / norms[:, None]
    return unit @ unit.T


def greedy_match_f1(tokens_a: np.ndarray, tokens_b: np.ndarray) -> float:
    """BERTScore-style F1 from token embeddings via greedy cosine matching."""
    if tokens_a.size == 0 or tokens_b.size == 0:
        return 0.0
    a = tokens_a / np.clip(np.linalg.norm(tokens_a, axis=1, keepdims=True), 1e-12, None)
    b = tokens_b / np.clip(np.linalg.norm(tokens_b, axis=1, keepdims=True), 1e-12, None)
    sim = a @ b.T
    recall = float(sim.max(axis=1).mean())
    precision = float(sim.max(axis=0).mean())
    if precision + recall <= 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _require_text(value: str, what: str) -> None:
    if not isinstance(value, str) or not value.strip():
        raise InvalidArgumentError(f"{what} must be a non-empty string")


class BaseProvider(ABC):
    """Uniform access to chat, embeddings and pairwise similarity."""

    model_id: str = "base"

    def __init__(self, max_retries: int = 3, backoff_base: float = 0.5):
        self.max_retries = max_retries
        self.backoff_base = backoff_base

    async def chat(self, request: ChatRequest) -> str:
        """Run a chat completion, retrying transport failures with backoff."""

        for attempt in range(self.max_retries + 1):
            try:
                text = await self._complete(request)
            except ProviderTransportError as e:
                if attempt >= self.max_retries:
                    ai_logger.error(f"Chat call for task {request.task} failed after {attempt + 1} attempts: {e}")
                    raise ProviderError(str(e), retryable=True) from e
                delay = self.backoff_base * (2 ** attempt)
                ai_logger.warning(f"Transport failure on task {request.task}, retrying in {delay:.2f}s: {e}")
                await asyncio.sleep(delay)
                continue
            if text is None or not text.strip():
                raise DecodeError(f"empty response for task {request.task}")
            return text
        raise ProviderError("retry loop exhausted")  # pragma: no cover

    async def embed(self, texts: Sequence[str]) -> List[EmbeddingVector]:
        """Embed texts, one vector per input in input order."""
        for t in texts:
            _require_text(t, "embedding input")
        if not texts:
            return []
        return await self._embed(list(texts))

    async def similarity_f1(self, a: str, b: str) -> float:
        """Symmetric similarity in [0, 1]; identical strings score 1."""
        _require_text(a, "similarity input")
        _require_text(b, "similarity input")
        if a == b:
            return 1.0
        first, second = (a, b) if a <= b else (b, a)
        score = await self._similarity(first, second)
        return min(1.0, max(0.0, float(score)))

    async def similarity_matrix(self, texts_a: Sequence[str], texts_b: Sequence[str]) -> np.ndarray:
        """Pairwise similarity_f1 scores, rows from ``texts_a``."""
        cache: Dict[Tuple[str, str], float] = {}
        matrix = np.zeros((len(texts_a), len(texts_b)))
        for i, a in enumerate(texts_a):
            for j, b in enumerate(texts_b):
                key = (a, b) if a <= b else (b, a)
                if key not in cache:
                    cache[key] = await self.similarity_f1(a, b)
                matrix[i, j] = cache[key]
        return matrix

    @abstractmethod
    async def _complete(self, request: ChatRequest) -> str:
        ...

    @abstractmethod
    async def _embed(self, texts: List[str]) -> List[EmbeddingVector]:
        ...

    async def _similarity(self, a: str, b: str) -> float:
        vectors = await self.embed([a, b])
        return cosine(vectors[0].values, vectors[1].values)


class HttpProvider(BaseProvider):
    """Chat-completion endpoint plus local sentence-transformers similarity."""

    def __init__(self, config: ProviderConfig):
        """Initialize API clients from the provider configuration."""
        super().__init__(max_retries=config.max_retries, backoff_base=config.backoff_base)
        self.config = config
        self.model_id = config.chat_model

        api_key = os.environ.get(config.api_key_env) or settings.openai_api_key
        self.openai_client = AsyncOpenAI(
            api_key=api_key or "unset",
            base_url=config.base_url,
            max_retries=0,
            http_client=httpx.AsyncClient(timeout=config.timeout_seconds),
        )

        if config.chat_model.startswith("claude") and settings.anthropic_api_key:
            self.anthropic_client: Optional[AsyncAnthropic] = AsyncAnthropic(
                api_key=settings.anthropic_api_key, max_retries=0
            )
        else:
            self.anthropic_client = None

        self._encoder = None
        self._encoder_lock = asyncio.Lock()

    async def _complete(self, request: ChatRequest) -> str:
        start_time = datetime.now()
        try:
            if self.config.chat_model.startswith("claude"):
                text = await self._complete_claude(request)
            else:
                text = await self._complete_openai(request)
        except (
            openai.APIConnectionError,
            openai.APITimeoutError,
            openai.RateLimitError,
            openai.InternalServerError,
            anthropic.APIConnectionError,
            anthropic.RateLimitError,
            anthropic.InternalServerError,
            httpx.TransportError,
        ) as e:
            raise ProviderTransportError(f"{type(e).__name__}: {e}") from e
        except (openai.APIError, anthropic.APIError) as e:
            log_error(e, {"task": request.task, "model": self.config.chat_model})
            raise ProviderError(f"{type(e).__name__}: {e}") from e

        response_time = (datetime.now() - start_time).total_seconds()
        log_ai_request(request.task, self.config.chat_model, len(request.user_prompt), response_time)
        return text

    async def _complete_openai(self, request: ChatRequest) -> str:
        response = await self.openai_client.chat.completions.create(
            model=self.config.chat_model,
            messages=[
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            temperature=request.temperature,
            max_tokens=request.max_tokens,
            seed=request.seed,
        )
        if not response.choices:
            raise DecodeError("response carried no choices")
        content = response.choices[0].message.content
        if content is None:
            raise DecodeError("response carried no content")
        return content

    async def _complete_claude(self, request: ChatRequest) -> str:
        if not self.anthropic_client:
            raise ProviderError("Anthropic client not initialized")

        response = await self.anthropic_client.messages.create(
            model=self.config.chat_model,
            system=request.system_prompt,
            max_tokens=request.max_tokens,
            temperature=request.temperature,
            messages=[{"role": "user", "content": request.user_prompt}],
        )
        if not response.content:
            raise DecodeError("response carried no content")
        return response.content[0].text

    async def _get_encoder(self):
        async with self._encoder_lock:
            if self._encoder is None:
                from sentence_transformers import SentenceTransformer

                ai_logger.info(f"Loading embedding model {self.config.embedding_model}")
                self._encoder = await asyncio.to_thread(SentenceTransformer, self.config.embedding_model)
        return self._encoder

    async def _embed(self, texts: List[str]) -> List[EmbeddingVector]:
        encoder = await self._get_encoder()
        matrix = await asyncio.to_thread(encoder.encode, texts, convert_to_numpy=True)
        return [
            EmbeddingVector(values=[float(x) for x in row], model_id=self.config.embedding_model)
            for row in np.asarray(matrix)
        ]

    async def _similarity(self, a: str, b: str) -> float:
        encoder = await self._get_encoder()
        token_sets = await asyncio.to_thread(encoder.encode, [a, b], output_value="token_embeddings")
        arrays = [_strip_special_tokens(_to_numpy(t)) for t in token_sets]
        return greedy_match_f1(arrays[0], arrays[1])


def _to_numpy(tensor: object) -> np.ndarray:
    if hasattr(tensor, "detach"):
        return tensor.detach().cpu().numpy()  # type: ignore[attr-defined]
    return np.asarray(tensor, dtype=float)


def _strip_special_tokens(tokens: np.ndarray) -> np.ndarray:
    # [CLS] and [SEP] bracket every BERT sequence
    if tokens.shape[0] > 2:
        return tokens[1:-1]
    return tokens


def build_provider(
    config: RunConfig,
    seed: int,
    transcript: Optional[Transcript] = None,
) -> BaseProvider:
    """Create a fresh provider for one seed."""
    from app.services.mock_providers import HashMockProvider, TranscriptMockProvider, load_transcript

    kind = config.provider.kind
    if kind == "hash-mock":
        return HashMockProvider(seed=seed)
    if kind == "transcript":
        if transcript is None:
            if not config.provider.transcript_path:
                raise InvalidArgumentError("transcript provider needs a transcript file")
            transcript = load_transcript(config.provider.transcript_path)
        return TranscriptMockProvider(transcript=transcript, seed=seed)
    return HttpProvider(config.provider)
