"""
Text hashing and tokenization helpers.
"""
import hashlib
import re
from typing import List


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> List[str]:
    """Lowercase alphanumeric tokens."""
    return _TOKEN_RE.findall(text.lower())


def stable_hash(*parts: object) -> int:
    """Process-independent 64-bit hash of the given parts."""
    h = hashlib.sha256()
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "big")


def stable_unit(*parts: object) -> float:
    """Deterministic float in [0, 1)."""
    return stable_hash(*parts) / float(1 << 64)


def first_sentence(text: str) -> str:
    """Leading sentence of ``text``, always a substring of it."""
    stripped = text.strip()
    match = re.search(r"[.;:](\s|$)", stripped)
    sentence = stripped[: match.start() + 1] if match else stripped
    return sentence


_XML_INVALID_RE = re.compile("[^\t\n\r\x20-\uD7FF\uE000-\uFFFD\U00010000-\U0010FFFF]")


def xml_safe(text: str) -> str:
    """Drop characters XML 1.0 cannot carry, such as NUL and other C0 controls."""
    return _XML_INVALID_RE.sub("", text)
