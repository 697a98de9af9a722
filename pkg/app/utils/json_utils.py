"""
JSON helpers for model output and artifact files.
"""
import json
import re
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from app.core.exceptions import DecodeError


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def extract_json(text: str) -> Any:
    """Decode the first JSON value in a model response.

    Accepts bare JSON, fenced code blocks and JSON embedded in prose.
    """
    if text is None:
        raise DecodeError("empty response")
    candidate = text.strip()
    try:
        return json.loads(candidate)
    except json.JSONDecodeError:
        pass

    fence = _FENCE_RE.search(candidate)
    if fence:
        try:
            return json.loads(fence.group(1).strip())
        except json.JSONDecodeError:
            pass

    decoder = json.JSONDecoder()
    for i, ch in enumerate(candidate):
        if ch in "[{":
            try:
                value, _ = decoder.raw_decode(candidate[i:])
                return value
            except json.JSONDecodeError:
                continue
    raise DecodeError(f"no JSON value in response: {candidate[:80]!r}")


def dumps_canonical(value: Any) -> str:
    """Deterministic JSON text: sorted keys, fixed indent, trailing newline."""
    if isinstance(value, BaseModel):
        value = value.model_dump(mode="json")
    return json.dumps(value, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: Path, value: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_canonical(value), encoding="utf-8")
    return path
