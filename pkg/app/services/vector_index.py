"""
Exact vector index for top-k retrieval.
"""
from typing import Generic, List, Sequence, Tuple, TypeVar

import numpy as np

from app.core.exceptions import InvalidArgumentError
from app.services.ai_service import BaseProvider

T = TypeVar("T")


class VectorIndex(Generic[T]):
    """Linear-scan cosine index over (item id, text, payload) entries."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray, payloads: Sequence[T]):
        self.ids = list(ids)
        self.payloads = list(payloads)
        norms = np.linalg.norm(matrix, axis=1) if len(self.ids) else np.zeros(0)
        norms[norms == 0.0] = 1.0
        self._unit = matrix / norms[:, None] if len(self.ids) else matrix

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    async def build(
        cls,
        provider: BaseProvider,
        entries: Sequence[Tuple[str, str, T]],
    ) -> "VectorIndex[T]":
        """Embed entry texts with the provider and index them."""
        if not entries:
            return cls([], np.zeros((0, 0)), [])
        vectors = await provider.embed([text for _, text, _ in entries])
        matrix = np.asarray([v.values for v in vectors], dtype=float)
        return cls([i for i, _, _ in entries], matrix, [p for _, _, p in entries])

    def scores(self, query_vector: Sequence[float]) -> np.ndarray:
        q = np.asarray(query_vector, dtype=float)
        norm = float(np.linalg.norm(q))
        if norm == 0.0 or not len(self.ids):
            return np.zeros(len(self.ids))
        return self._unit @ (q / norm)

    def ranked(self, query_vector: Sequence[float]) -> List[Tuple[str, float, T]]:
        """Full ranking: descending cosine, ties by ascending id."""
        scores = self.scores(query_vector)
        order = sorted(range(len(self.ids)), key=lambda i: (-float(scores[i]), self.ids[i]))
        return [(self.ids[i], float(scores[i]), self.payloads[i]) for i in order]


async def retrieve_top_k(
    query: str,
    index: VectorIndex[T],
    k: int,
    provider: BaseProvider,
) -> List[Tuple[str, float, T]]:
    """Top-k entries by cosine similarity to the query text."""
    if k < 1:
        raise InvalidArgumentError(f"k must be at least 1, got {k}")
    if len(index) == 0:
        return []
    vector = (await provider.embed([query]))[0]
    return index.ranked(vector.values)[:k]
