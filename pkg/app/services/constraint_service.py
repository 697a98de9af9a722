"""
Numeric constraint extraction and the deterministic logical-consistency check.
"""
import math
import re
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Set, Tuple

from app.core.app_logging import verification_logger
from app.schemas.requirement import RequirementSet
from app.schemas.verification import Comparator, LogicFinding, LogicReport, NumericConstraint
from app.utils.text_utils import tokenize


# Longest phrases first so "less than or equal to" wins over "less than"
_COMPARATOR_PHRASES: List[Tuple[str, Comparator]] = sorted(
    [
        ("≤", Comparator.LE),
        ("<=", Comparator.LE),
        ("=<", Comparator.LE),
        ("at most", Comparator.LE),
        ("no more than", Comparator.LE),
        ("not more than", Comparator.LE),
        ("no longer than", Comparator.LE),
        ("not exceed", Comparator.LE),
        ("not exceeding", Comparator.LE),
        ("less than or equal to", Comparator.LE),
        ("a maximum of", Comparator.LE),
        ("maximum of", Comparator.LE),
        ("up to", Comparator.LE),
        ("within", Comparator.LE),
        ("below", Comparator.LT),
        ("under", Comparator.LT),
        ("less than", Comparator.LT),
        ("fewer than", Comparator.LT),
        ("<", Comparator.LT),
        ("≥", Comparator.GE),
        (">=", Comparator.GE),
        ("at least", Comparator.GE),
        ("no less than", Comparator.GE),
        ("not less than", Comparator.GE),
        ("no fewer than", Comparator.GE),
        ("greater than or equal to", Comparator.GE),
        ("a minimum of", Comparator.GE),
        ("minimum of", Comparator.GE),
        ("more than", Comparator.GT),
        ("greater than", Comparator.GT),
        ("above", Comparator.GT),
        ("over", Comparator.GT),
        (">", Comparator.GT),
        ("exactly", Comparator.EQ),
        ("equal to", Comparator.EQ),
        ("=", Comparator.EQ),
    ],
    key=lambda p: -len(p[0]),
)
_COMPARATORS = dict(_COMPARATOR_PHRASES)

_CONSTRAINT_RE = re.compile(
    r"(?<![\w<>=≤≥])(?P<cmp>"
    + "|".join(re.escape(p) for p, _ in _COMPARATOR_PHRASES)
    + r")\s*(?P<value>\d+(?:\.\d+)?)\s*(?P<unit>%|[a-zA-Z]+)?",
    re.IGNORECASE,
)

# unit word -> (canonical unit, multiplier)
_UNITS: Dict[str, Tuple[str, float]] = {
    "ms": ("ms", 1.0),
    "msec": ("ms", 1.0),
    "millisecond": ("ms", 1.0),
    "milliseconds": ("ms", 1.0),
    "s": ("s", 1.0),
    "sec": ("s", 1.0),
    "secs": ("s", 1.0),
    "second": ("s", 1.0),
    "seconds": ("s", 1.0),
    "min": ("s", 60.0),
    "mins": ("s", 60.0),
    "minute": ("s", 60.0),
    "minutes": ("s", 60.0),
    "h": ("s", 3600.0),
    "hour": ("s", 3600.0),
    "hours": ("s", 3600.0),
    "day": ("s", 86400.0),
    "days": ("s", 86400.0),
    "%": ("%", 1.0),
    "percent": ("%", 1.0),
}

# Physical units outside the canonical set; constraints in them are skipped
_UNSUPPORTED_UNITS = frozenset({
    "hz", "khz", "mhz", "ghz", "fps", "b", "kb", "mb", "gb", "tb", "kbps", "mbps", "gbps",
    "m", "cm", "mm", "km", "kmh", "mph", "w", "kw", "kwh", "wh", "mw", "v", "mv", "a", "ma",
    "c", "db", "g", "kg", "nm", "lux", "x",
})

_STOPWORDS = frozenset({
    "a", "an", "the", "of", "to", "for", "in", "on", "at", "by", "with", "and", "or", "its", "their",
    "this", "that", "these", "those", "which", "than", "per", "each", "every", "all", "any", "from",
    "shall", "must", "should", "will", "may", "can", "be", "is", "are", "been", "being", "remain",
    "remains", "stay", "stays", "kept", "keep", "not", "never", "have", "has", "take", "takes",
    "within", "under", "below", "above", "over", "up", "during", "mode", "system", "it", "no", "as",
})

_SCOPE_PATH_RE = re.compile(r"\b([a-z]+)-path\b", re.IGNORECASE)
_SCOPE_DURING_RE = re.compile(r"\bduring\s+([a-z]+(?:\s+[a-z]+)?)", re.IGNORECASE)
_SCOPE_MODE_RE = re.compile(r"\bin\s+([a-z]+)\s+mode\b", re.IGNORECASE)

_CLAUSE_BREAK_RE = re.compile(r"[.;:,()]\s|[.;:]$")

_TIME_UNITS = {"ms": 1.0, "s": 1000.0}


def extract_scope(text: str) -> Optional[str]:
    """Qualifier restricting where a requirement's bounds apply."""
    match = _SCOPE_PATH_RE.search(text)
    if match:
        return f"{match.group(1).lower()}-path"
    match = _SCOPE_MODE_RE.search(text)
    if match:
        return f"{match.group(1).lower()} mode"
    match = _SCOPE_DURING_RE.search(text)
    if match:
        words = [w for w in match.group(1).lower().split() if w not in _STOPWORDS]
        if words:
            return "during " + " ".join(words)
    return None


def _metric(prefix: str, scope_tokens: Set[str]) -> str:
    breaks = list(_CLAUSE_BREAK_RE.finditer(prefix))
    if breaks:
        prefix = prefix[breaks[-1].end():]
    content = [
        t for t in tokenize(prefix)
        if t not in _STOPWORDS and t not in scope_tokens and not t.isdigit()
    ]
    return " ".join(content[-2:])


def extract_constraints(requirement_set: RequirementSet) -> List[NumericConstraint]:
    """Pattern-extract numeric bounds from every requirement."""
    constraints: List[NumericConstraint] = []
    for r in requirement_set.requirements:
        text = r.description
        scope = extract_scope(text)
        scope_tokens = set(tokenize(scope)) if scope else set()
        start = 0
        for match in _CONSTRAINT_RE.finditer(text):
            comparator = _COMPARATORS[match.group("cmp").lower()]
            unit_word = (match.group("unit") or "").lower()
            if unit_word in _UNITS:
                unit, factor = _UNITS[unit_word]
            elif unit_word in _UNSUPPORTED_UNITS:
                start = match.end()
                continue
            else:
                unit, factor = "count", 1.0

            metric = _metric(text[start:match.start()], scope_tokens)
            start = match.end()
            if not metric:
                continue
            value = float(match.group("value")) * factor
            if not math.isfinite(value):
                continue
            constraints.append(NumericConstraint(
                requirement_id=r.id,
                metric=metric,
                comparator=comparator,
                value=value,
                unit=unit,
                scope=scope,
            ))
    return constraints


def _family(unit: str) -> str:
    return "time" if unit in _TIME_UNITS else unit


def _normalized(c: NumericConstraint) -> float:
    return c.value * _TIME_UNITS.get(c.unit, 1.0)


def interval(c: NumericConstraint) -> Tuple[float, bool, float, bool]:
    """(low, low closed, high, high closed) in the unit family's base unit."""
    v = _normalized(c)
    if c.comparator is Comparator.LE:
        return -math.inf, False, v, True
    if c.comparator is Comparator.LT:
        return -math.inf, False, v, False
    if c.comparator is Comparator.GE:
        return v, True, math.inf, False
    if c.comparator is Comparator.GT:
        return v, False, math.inf, False
    return v, True, v, True


def intervals_disjoint(a: NumericConstraint, b: NumericConstraint) -> bool:
    lo_a, lo_a_closed, hi_a, hi_a_closed = interval(a)
    lo_b, lo_b_closed, hi_b, hi_b_closed = interval(b)
    if lo_a > lo_b or (lo_a == lo_b and not lo_a_closed):
        lo, lo_closed = lo_a, lo_a_closed
    else:
        lo, lo_closed = lo_b, lo_b_closed
    if hi_a < hi_b or (hi_a == hi_b and not hi_a_closed):
        hi, hi_closed = hi_a, hi_a_closed
    else:
        hi, hi_closed = hi_b, hi_b_closed
    if lo > hi:
        return True
    if lo == hi:
        return not (lo_closed and hi_closed)
    return False


def scopes_compatible(a: Optional[str], b: Optional[str]) -> bool:
    """Equal scopes, or either unscoped."""
    return a is None or b is None or a == b


def comparable(a: NumericConstraint, b: NumericConstraint) -> bool:
    return (
        a.requirement_id != b.requirement_id
        and a.metric == b.metric
        and _family(a.unit) == _family(b.unit)
        and scopes_compatible(a.scope, b.scope)
    )


def logic_check(constraints: Sequence[NumericConstraint]) -> LogicReport:
    """S_logic = 1 - conflicting / comparable requirement pairs."""
    comparable_pairs: Set[Tuple[str, str]] = set()
    conflicting_pairs: Set[Tuple[str, str]] = set()
    findings: List[LogicFinding] = []

    for a, b in combinations(constraints, 2):
        if not comparable(a, b):
            continue
        pair = tuple(sorted((a.requirement_id, b.requirement_id)))
        comparable_pairs.add(pair)  # type: ignore[arg-type]
        if intervals_disjoint(a, b):
            conflicting_pairs.add(pair)  # type: ignore[arg-type]
            findings.append(LogicFinding(
                left_id=pair[0],
                right_id=pair[1],
                metric=a.metric,
                scope=a.scope or b.scope,
                detail=(
                    f"{a.requirement_id}: {a.metric} {a.comparator.value} {a.value:g} {a.unit} "
                    f"contradicts {b.requirement_id}: {b.metric} {b.comparator.value} {b.value:g} {b.unit}"
                ),
            ))

    if not comparable_pairs:
        score = 1.0
    else:
        score = 1.0 - len(conflicting_pairs) / len(comparable_pairs)
    if findings:
        verification_logger.info(f"Logic check found {len(conflicting_pairs)} conflicting requirement pair(s)")
    findings.sort(key=lambda f: (f.left_id, f.right_id, f.metric, f.detail))
    return LogicReport(
        score=score,
        comparable_pairs=len(comparable_pairs),
        conflicting_pairs=len(conflicting_pairs),
        findings=findings,
    )
