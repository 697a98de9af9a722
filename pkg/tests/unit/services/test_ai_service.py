"""
Unit tests for AI service.
"""
import pytest
from unittest.mock import AsyncMock, Mock, patch

import httpx
import numpy as np

from app.core.config import ProviderConfig, RunConfig
from app.core.exceptions import DecodeError, InvalidArgumentError, ProviderError
from app.schemas.provider import ChatRequest, EmbeddingVector, Transcript
from app.services.ai_service import (
    HttpProvider,
    build_provider,
    cosine,
    cosine_matrix,
    greedy_match_f1,
)
from app.services.mock_providers import HashMockProvider, TranscriptMockProvider


def _chat_response(content):
    response = Mock()
    response.choices = [Mock()]
    response.choices[0].message.content = content
    return response


class TestHttpProvider:
    """Test the HTTP chat provider."""

    @pytest.fixture
    def provider(self):
        """Create provider instance for testing."""
        return HttpProvider(ProviderConfig(kind="http", max_retries=2, backoff_base=0.0))

    @pytest.fixture
    def request_(self):
        return ChatRequest(system_prompt="You are a tester.", user_prompt="Say hello.", seed=101, task="generate")

    @pytest.mark.asyncio
    async def test_chat_success(self, provider, request_):
        """Test successful chat completion."""
        with patch.object(provider.openai_client.chat.completions, 'create',
                          new_callable=AsyncMock, return_value=_chat_response("hello")) as mock_create:

            result = await provider.chat(request_)

            assert result == "hello"
            kwargs = mock_create.call_args.kwargs
            assert kwargs["seed"] == 101
            assert kwargs["messages"][0] == {"role": "system", "content": "You are a tester."}
            assert kwargs["messages"][1]["content"] == "Say hello."

    @pytest.mark.asyncio
    async def test_transport_failure_is_retried(self, provider, request_):
        """Test that transport errors are retried with backoff."""
        with patch.object(provider.openai_client.chat.completions, 'create',
                          new_callable=AsyncMock) as mock_create:
            mock_create.side_effect = [httpx.ConnectError("connection reset"), _chat_response("recovered")]

            result = await provider.chat(request_)

            assert result == "recovered"
            assert mock_create.call_count == 2

    @pytest.mark.asyncio
    async def test_persistent_transport_failure_raises_provider_error(self, provider, request_):
        with patch.object(provider.openai_client.chat.completions, 'create',
                          new_callable=AsyncMock, side_effect=httpx.ConnectError("down")) as mock_create:

            with pytest.raises(ProviderError) as exc_info:
                await provider.chat(request_)

            assert exc_info.value.retryable
            assert mock_create.call_count == 3

    @pytest.mark.asyncio
    async def test_empty_content_is_a_decode_error(self, provider, request_):
        with patch.object(provider.openai_client.chat.completions, 'create',
                          new_callable=AsyncMock, return_value=_chat_response("")):

            with pytest.raises(DecodeError):
                await provider.chat(request_)

    @pytest.mark.asyncio
    async def test_missing_content_is_a_decode_error(self, provider, request_):
        with patch.object(provider.openai_client.chat.completions, 'create',
                          new_callable=AsyncMock, return_value=_chat_response(None)):

            with pytest.raises(DecodeError):
                await provider.chat(request_)

    @pytest.mark.asyncio
    async def test_claude_model_without_client(self, request_):
        """Test Claude routing when no Anthropic key is configured."""
        provider = HttpProvider(ProviderConfig(kind="http", chat_model="claude-3-haiku", max_retries=0))
        provider.anthropic_client = None

        with pytest.raises(ProviderError):
            await provider.chat(request_)

    @pytest.mark.asyncio
    async def test_similarity_of_identical_text_skips_encoder(self, provider):
        with patch.object(provider, '_similarity', new_callable=AsyncMock) as mock_similarity:
            assert await provider.similarity_f1("same text", "same text") == 1.0
            mock_similarity.assert_not_called()

    @pytest.mark.asyncio
    async def test_similarity_is_symmetric_and_clamped(self, provider):
        with patch.object(provider, '_similarity', new_callable=AsyncMock, return_value=1.3) as mock_similarity:
            assert await provider.similarity_f1("b text", "a text") == 1.0
            assert mock_similarity.call_args.args == ("a text", "b text")

    @pytest.mark.asyncio
    async def test_similarity_rejects_empty_input(self, provider):
        with pytest.raises(InvalidArgumentError):
            await provider.similarity_f1("", "text")


class TestVectorMath:

    def test_cosine(self):
        assert cosine([1, 0], [1, 0]) == pytest.approx(1.0)
        assert cosine([1, 0], [0, 1]) == pytest.approx(0.0)
        assert cosine([0, 0], [1, 1]) == 0.0

    def test_cosine_matrix_is_symmetric_with_unit_diagonal(self):
        vectors = [EmbeddingVector(values=v, model_id="t") for v in ([1, 0, 0], [1, 1, 0], [0, 0, 2])]
        m = cosine_matrix(vectors)
        assert m.shape == (3, 3)
        assert np.allclose(np.diag(m), 1.0)
        assert np.allclose(m, m.T)
        assert cosine_matrix([]).shape == (0, 0)

    def test_greedy_match_f1_identical_tokens(self):
        tokens = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert greedy_match_f1(tokens, tokens) == pytest.approx(1.0)
        assert greedy_match_f1(tokens, np.zeros((0, 2))) == 0.0


class TestBuildProvider:

    def test_hash_mock(self):
        provider = build_provider(RunConfig(provider=ProviderConfig(kind="hash-mock")), seed=7)
        assert isinstance(provider, HashMockProvider)
        assert provider.seed == 7

    def test_transcript_needs_a_file(self):
        with pytest.raises(InvalidArgumentError):
            build_provider(RunConfig(provider=ProviderConfig(kind="transcript")), seed=1)

    def test_transcript_from_object(self):
        provider = build_provider(
            RunConfig(provider=ProviderConfig(kind="transcript")), seed=1, transcript=Transcript(turns=[])
        )
        assert isinstance(provider, TranscriptMockProvider)

    def test_http(self):
        assert isinstance(build_provider(RunConfig(), seed=1), HttpProvider)
