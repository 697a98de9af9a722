"""
Standard reference parsing (ISO-style clause identifiers).
"""
import re
from typing import List


ISO_REFERENCE_RE = re.compile(
    r"\bISO(?:/IEC)?\s*(\d{4,5})(?:\s*-\s*(\d+))?(?:\s*:\s*((?:[A-Z]\.)?\d+(?:\.\d+)*))?"
)


def normalize_reference(standard: str, part: str = "", clause: str = "") -> str:
    ref = f"ISO{standard}"
    if part:
        ref += f"-{part}"
    if clause:
        ref += f":{clause}"
    return ref


def extract_references(text: str) -> List[str]:
    """Normalized standard references in order of appearance, deduplicated."""
    refs: List[str] = []
    for m in ISO_REFERENCE_RE.finditer(text):
        ref = normalize_reference(m.group(1), m.group(2) or "", m.group(3) or "")
        if ref not in refs:
            refs.append(ref)
    return refs


def reference_matches(reference: str, clause_id: str) -> bool:
    """Whether a clause id falls under a (possibly coarser) reference."""
    if clause_id == reference:
        return True
    if ":" in reference:
        return clause_id.startswith(reference + ".")
    return clause_id.startswith(reference + ":") or clause_id.startswith(reference + "-")
