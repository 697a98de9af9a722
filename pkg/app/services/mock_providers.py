"""
Offline providers: hash-derived responses and scripted transcripts.
"""
import json
import re
from collections import Counter
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from app.core import prompts as P
from app.core.app_logging import ai_logger
from app.core.exceptions import TranscriptExhaustedError
from app.schemas.provider import ChatRequest, EmbeddingVector, Transcript, TranscriptTurn
from app.schemas.requirement import QualityDimension
from app.services.ai_service import BaseProvider
from app.utils.standards import reference_matches
from app.utils.text_utils import first_sentence, stable_hash, stable_unit, tokenize


EMBEDDING_DIM = 4096
HASH_MODEL_ID = "hash-bow-4096"

# Shared latency item planted for three agents so runs always carry conflicts
_SHARED_LATENCY = "Processing latency of the critical control pipeline shall be at most {value} ms"
_SHARED_LATENCY_VALUES = {
    QualityDimension.SAFETY: 500,
    QualityDimension.EFFICIENCY: 50,
    QualityDimension.SUSTAINABILITY: 120,
}

_REQUIREMENT_POOLS: Dict[QualityDimension, List[Tuple[str, str, str]]] = {
    QualityDimension.SAFETY: [
        ("Strategic", "The system shall prevent hazardous states that could injure people or damage property.", "Top-level hazard mitigation goal."),
        ("Strategic", "Residual risk shall be reduced to an acceptable level through layered fail-safe mechanisms.", "Defence in depth against single faults."),
        ("Tactical", "Faults in critical components shall be detected and isolated before they propagate.", "Fault containment limits hazard exposure."),
        ("Operational", "An emergency stop shall be executed within 200 ms of a detected critical fault.", "Bounded reaction time after fault detection."),
        ("Operational", "All safety-relevant inputs shall be validated against plausibility ranges.", "Implausible inputs are a common hazard source."),
        ("Operational", "Watchdog timers shall supervise every safety task.", "Detects stalled safety functions."),
    ],
    QualityDimension.EFFICIENCY: [
        ("Strategic", "The system shall use computing and network resources economically.", "Resource budgets are finite."),
        ("Strategic", "Response times shall meet interactive expectations of every operator.", "Perceived responsiveness drives adoption."),
        ("Tactical", "Throughput shall sustain peak demand without queue growth.", "Backlogs degrade every downstream stage."),
        ("Operational", "CPU utilization shall stay at most 70 % during peak load.", "Headroom for bursts."),
        ("Operational", "Caching shall avoid recomputing unchanged intermediate results.", "Avoids redundant computation."),
    ],
    QualityDimension.SUSTAINABILITY: [
        ("Strategic", "The system shall minimise its lifetime energy and material footprint.", "Environmental impact over the service life."),
        ("Strategic", "The design shall remain maintainable over a ten-year service life.", "Long-lived deployments need maintainability."),
        ("Tactical", "Components shall be replaceable without redesigning the whole system.", "Modularity extends hardware life."),
        ("Operational", "Idle hardware shall enter a low-power state after 60 s without activity.", "Idle power dominates energy use."),
        ("Operational", "Energy consumption per processed request shall be logged for reporting.", "Measurement precedes reduction."),
    ],
    QualityDimension.TRUSTWORTHINESS: [
        ("Strategic", "Users shall be able to understand and trust automated decisions.", "Trust requires understanding."),
        ("Strategic", "The system shall protect the confidentiality and integrity of user data.", "Data protection underpins trust."),
        ("Tactical", "Every automated decision shall be explainable through a recorded justification.", "Explanations support review."),
        ("Tactical", "All external communication shall be encrypted and authenticated.", "Prevents tampering and eavesdropping."),
        ("Operational", "Access to personal data shall require role-based authorization.", "Least privilege."),
        ("Operational", "Security events shall be reported to operators within 5 s.", "Fast incident awareness."),
    ],
    QualityDimension.RESPONSIBILITY: [
        ("Strategic", "The system shall comply with applicable safety and data-protection regulations.", "Legal accountability."),
        ("Strategic", "Operators shall remain accountable for overriding automated behaviour.", "Human accountability for overrides."),
        ("Tactical", "Design decisions affecting users shall be traceable to accountable owners.", "Traceability of responsibility."),
        ("Tactical", "Safety-relevant work products shall follow ISO 26262-5 hardware development guidance.", "Standard-conformant development."),
        ("Operational", "An audit log shall retain decision records for at least 90 days.", "Supports later audits."),
        ("Operational", "Personal data shall be deleted on request within 30 days.", "Data subject rights."),
    ],
}

_AXIS_KEYWORDS: Dict[QualityDimension, frozenset] = {
    QualityDimension.SAFETY: frozenset({
        "hazard", "hazardous", "hazards", "safe", "safety", "fault", "faults", "collision", "emergency",
        "injure", "risk", "fail", "braking", "brake", "watchdog", "plausibility", "stop", "obstacle",
    }),
    QualityDimension.EFFICIENCY: frozenset({
        "latency", "throughput", "cpu", "gpu", "utilization", "resources", "efficient", "economically",
        "caching", "response", "fast", "performance", "hz", "budget", "queue",
    }),
    QualityDimension.SUSTAINABILITY: frozenset({
        "energy", "power", "lifetime", "footprint", "maintainable", "replaceable", "sustainability",
        "material", "idle", "carbon", "thermal", "service", "life",
    }),
    QualityDimension.TRUSTWORTHINESS: frozenset({
        "trust", "explainable", "explain", "explanation", "encrypted", "authenticated", "authorization",
        "security", "confidentiality", "integrity", "transparent", "understand", "justification",
    }),
    QualityDimension.RESPONSIBILITY: frozenset({
        "comply", "compliance", "regulations", "audit", "accountable", "traceable", "iso", "record",
        "recorder", "retain", "deleted", "owners", "ethics", "liability", "logged",
    }),
}

_NUMBER_UNIT_RE = re.compile(r"(\d+(?:\.\d+)?)\s*(ms|s|%)(?![a-z])", re.IGNORECASE)


@lru_cache(maxsize=65536)
def _bucket(token: str) -> int:
    return stable_hash("bucket", token) % EMBEDDING_DIM


def _marker_value(text: str, marker: str) -> str:
    """Rest of the first line that starts with ``marker``."""
    for line in text.splitlines():
        if line.startswith(marker):
            return line[len(marker):].strip()
    return ""


def _marker_values(text: str, marker: str) -> List[str]:
    return [line[len(marker):].strip() for line in text.splitlines() if line.startswith(marker)]


def _split_record(value: str, fields: int) -> List[str]:
    """Split an ``id | ... | text`` record; the last field keeps any separators."""
    parts = value.split(" | ", fields - 1)
    while len(parts) < fields:
        parts.append("")
    return parts


def _token_cosine(a: str, b: str) -> float:
    ca, cb = Counter(tokenize(a)), Counter(tokenize(b))
    if not ca or not cb:
        return 1.0 if a.strip().lower() == b.strip().lower() else 0.0
    dot = sum(ca[t] * cb[t] for t in ca.keys() & cb.keys())
    na = sum(v * v for v in ca.values()) ** 0.5
    nb = sum(v * v for v in cb.values()) ** 0.5
    return dot / (na * nb)


class HashMockProvider(BaseProvider):
    """Byte-deterministic provider whose answers are pure functions of the request."""

    model_id = HASH_MODEL_ID

    def __init__(self, seed: int = 0):
        super().__init__(max_retries=0, backoff_base=0.0)
        self.seed = seed
        self._handlers: Dict[str, Callable[[ChatRequest], str]] = {
            P.Task.GENERATE: self._generate,
            P.Task.CLASSIFY: self._classify,
            P.Task.THESIS: self._thesis,
            P.Task.CRITIQUE: self._critique,
            P.Task.SYNTHESIZE: self._synthesize,
            P.Task.PROJECT: self._project,
            P.Task.STITCH: self._stitch,
            P.Task.APPLICABILITY: self._applicability,
            P.Task.VERIFY: self._verify,
            P.Task.HALLUCINATION: self._hallucination,
            P.Task.JUDGE: self._judge,
            P.Task.MATERIALS: self._materials,
        }

    def _key(self, request: ChatRequest, *extra: object) -> int:
        return stable_hash(request.task, request.system_prompt, request.user_prompt, request.seed, *extra)

    async def _complete(self, request: ChatRequest) -> str:
        handler = self._handlers.get(request.task, self._generic)
        return handler(request)

    async def _embed(self, texts: List[str]) -> List[EmbeddingVector]:
        vectors = []
        for text in texts:
            tokens = tokenize(text) or [text.strip().lower()]
            v = np.zeros(EMBEDDING_DIM)
            for tok in tokens:
                v[_bucket(tok)] += 1.0
            v /= np.linalg.norm(v)
            vectors.append(EmbeddingVector(values=v.tolist(), model_id=HASH_MODEL_ID))
        return vectors

    async def _similarity(self, a: str, b: str) -> float:
        return _token_cosine(a, b)

    # Task handlers

    def _generic(self, request: ChatRequest) -> str:
        return f"mock response {self._key(request):016x}"

    def _generate(self, request: ChatRequest) -> str:
        try:
            dim = QualityDimension.parse(request.persona)
        except ValueError:
            return "[]"
        pool = _REQUIREMENT_POOLS[dim]
        ranked = sorted(pool, key=lambda item: stable_hash("pick", request.user_prompt, request.seed, item[1]))
        count = 3 + stable_hash("count", dim.value, request.user_prompt, request.seed) % 4
        chosen = ranked[:count]
        items = []
        if dim in _SHARED_LATENCY_VALUES:
            items.append({
                "id": f"{dim.prefix}-X",
                "description": _SHARED_LATENCY.format(value=_SHARED_LATENCY_VALUES[dim]),
                "level": "Tactical",
                "rationale": f"{dim.value} budget for the control pipeline.",
            })
        for level, text, rationale in chosen:
            items.append({"id": f"{dim.prefix}-X", "description": text, "level": level, "rationale": rationale})
        return json.dumps(items)

    def _classify(self, request: ChatRequest) -> str:
        left = _split_record(_marker_value(request.user_prompt, P.LEFT_MARKER), 4)[3]
        right = _split_record(_marker_value(request.user_prompt, P.RIGHT_MARKER), 4)[3]
        left_nums = {(u.lower(), float(v)) for v, u in _NUMBER_UNIT_RE.findall(left)}
        right_nums = {(u.lower(), float(v)) for v, u in _NUMBER_UNIT_RE.findall(right)}
        shared_units = {u for u, _ in left_nums} & {u for u, _ in right_nums}
        h = stable_unit(self._key(request))

        if shared_units and left_nums != right_nums:
            kind, confidence = "ResourceBound", 0.9
            rationale = "Numeric budgets on the same quantity cannot both hold."
        elif tokenize(left) == tokenize(right):
            kind, confidence = "Redundant", 0.95
            rationale = "Both requirements state the same obligation."
        elif h < 0.5:
            kind, confidence = "Redundant", round(0.6 + 0.3 * h, 3)
            rationale = "Overlapping intent with compatible constraints."
        elif h < 0.75:
            kind, confidence = "LogicalIncompatibility", round(0.5 + 0.4 * h, 3)
            rationale = "The requirements entail mutually exclusive states."
        else:
            kind, confidence = "ResourceBound", round(0.4 + 0.5 * h, 3)
            rationale = "The requirements compete for a shared budget."
        return json.dumps({"kind": kind, "confidence": confidence, "rationale": rationale})

    def _thesis(self, request: ChatRequest) -> str:
        focal = _split_record(_marker_value(request.user_prompt, P.FOCAL_MARKER), 2)
        conflict = _marker_value(request.user_prompt, P.CONFLICT_MARKER)
        variant = self._key(request) % 100000
        return (
            f"{request.persona} position on {conflict}: retain {focal[0]} ({focal[1]}) "
            f"because it protects {request.persona.lower()} objectives. Variant {variant}."
        )

    def _critique(self, request: ChatRequest) -> str:
        h = stable_unit(self._key(request))
        stance = "can accept" if h < 0.5 else "objects to"
        return (
            f"{request.persona} {stance} the thesis under its own constraints; "
            f"impact score {int(h * 100)}."
        )

    def _synthesize(self, request: ChatRequest) -> str:
        conflict = _marker_value(request.user_prompt, P.CONFLICT_MARKER)
        round_text = _marker_value(request.user_prompt, P.ROUND_MARKER)
        round_index = int(round_text) if round_text.isdigit() else 1
        focal_id, focal_text = _split_record(_marker_value(request.user_prompt, P.FOCAL_MARKER), 2)
        previous = _marker_value(request.user_prompt, P.PREVIOUS_MARKER)

        # Claims depend on the conflict, round and seed only, never on focus order
        h = stable_unit("claim", conflict, round_index, request.seed)
        if h < 0.3 * round_index:
            claim = "Consensus"
        elif h < 0.3 * round_index + 0.35:
            claim = "Partial"
        else:
            claim = "Unresolved"

        repeat = stable_unit("repeat", conflict, round_index, request.seed) < 0.25
        if previous and repeat and claim != "Consensus":
            text = previous
        else:
            tag = stable_hash("tag", conflict, round_index, request.seed) % 1000
            text = f"Revised {focal_id}: {focal_text} (round {round_index} balance {tag})"

        candidate = {"proposed_text": text, "status_claim": claim, "decomposition": []}
        if claim == "Consensus":
            candidate["decomposition"] = [
                {"suffix": ".1", "text": f"Fast-path variant: {focal_text}", "level": "Operational"},
                {"suffix": ".2", "text": f"Thorough-path variant: {focal_text}", "level": "Operational"},
            ]
        candidates = [candidate]
        if stable_unit("alt", conflict, round_index, request.seed) < 0.3:
            alternative = dict(candidate)
            alternative["proposed_text"] = f"{text} with staged rollout"
            candidates.append(alternative)
        return json.dumps({"candidates": candidates})

    def _project(self, request: ChatRequest) -> str:
        text = request.user_prompt
        tokens = set(tokenize(text))
        scores = {}
        for dim in QualityDimension:
            base = 0.05 + 0.4 * stable_unit("axis", dim.value, text)
            hits = len(tokens & _AXIS_KEYWORDS[dim])
            scores[dim.value.lower()] = round(min(1.0, base + 0.45 * min(1.0, hits / 2.0)), 4)
        return json.dumps(scores)

    def _stitch(self, request: ChatRequest) -> str:
        # Defer to the similarity fallback
        return json.dumps({"parent_ids": []})

    def _applicability(self, request: ChatRequest) -> str:
        clause_id = _marker_value(request.user_prompt, P.CLAUSE_MARKER)
        applicable = stable_unit("applicable", clause_id, request.seed) < 0.85
        return json.dumps({
            "applicable": applicable,
            "justification": "Clause scope matches the project." if applicable else "Clause scope is outside the project.",
        })

    def _verify(self, request: ChatRequest) -> str:
        clause_id = _marker_value(request.user_prompt, P.CLAUSE_MARKER)
        clause_text = _marker_value(request.user_prompt, P.CLAUSE_TEXT_MARKER)
        clause_tokens = {t for t in tokenize(clause_text) if len(t) > 2}
        best_id, best_overlap = None, 0.0
        for record in _marker_values(request.user_prompt, P.EVIDENCE_MARKER):
            req_id, req_text = _split_record(record, 2)
            req_tokens = {t for t in tokenize(req_text) if len(t) > 2}
            overlap = len(clause_tokens & req_tokens) / len(clause_tokens) if clause_tokens else 0.0
            if best_id is None or overlap > best_overlap:
                best_id, best_overlap = req_id, overlap
        jitter = (stable_unit("verify", clause_id, request.seed) - 0.5) * 0.1
        score = best_overlap + jitter
        if score >= 0.6:
            label = "Satisfied"
        elif score >= 0.3:
            label = "Partially"
        else:
            label = "NotSatisfied"
        return json.dumps({
            "label": label,
            "best_requirement_id": best_id,
            "rationale": f"Token overlap {best_overlap:.2f} with {best_id}.",
            "citation": first_sentence(clause_text),
        })

    def _hallucination(self, request: ChatRequest) -> str:
        refs = _marker_values(request.user_prompt, P.REFERENCE_MARKER)
        clause_ids = [_split_record(v, 2)[0] for v in _marker_values(request.user_prompt, P.RETRIEVED_CLAUSE_MARKER)]
        missing = [r for r in refs if not any(reference_matches(r, c) for c in clause_ids)]
        return json.dumps({
            "supported": not missing,
            "rationale": "All references retrieved." if not missing else f"Unsupported references: {', '.join(missing)}",
        })

    def _judge(self, request: ChatRequest) -> str:
        text = request.user_prompt
        tokens = set(tokenize(text))
        scores = {}
        for criterion in ("unambiguous", "correctness", "verifiability", "set_consistency", "set_feasibility", "terminology"):
            scores[criterion] = round(3.5 + 1.5 * stable_unit("judge", criterion, text, request.seed), 2)
        if {"client", "clients"} & tokens and {"user", "users"} & tokens:
            scores["terminology"] = 2.5
        return json.dumps(scores)

    def _materials(self, request: ChatRequest) -> str:
        goals = _marker_values(request.user_prompt, P.REQUIREMENT_MARKER)
        lines = ["# Downstream materials", "", "## Test cases", ""]
        for i, goal in enumerate(goals, start=1):
            goal_id = _split_record(goal, 2)[0]
            lines.append(f"- TC-{i:03d}: verify {goal_id}")
        return "\n".join(lines) + "\n"


class TranscriptMockProvider(HashMockProvider):
    """Replays scripted turns; unscripted tasks fall back to hash responses."""

    def __init__(self, transcript: Transcript, seed: int = 0):
        super().__init__(seed=seed)
        self.transcript = transcript
        self._consumed = [False] * len(transcript.turns)

    @property
    def remaining_turns(self) -> int:
        return self._consumed.count(False)

    def _match(self, request: ChatRequest) -> Optional[int]:
        haystack = f"task={request.task}\npersona={request.persona}\n{request.system_prompt}\n{request.user_prompt}"
        for i, turn in enumerate(self.transcript.turns):
            if self._consumed[i]:
                continue
            if turn.task is not None and turn.task != request.task:
                continue
            if turn.match_hint in haystack:
                return i
        return None

    async def _complete(self, request: ChatRequest) -> str:
        index = self._match(request)
        if index is not None:
            self._consumed[index] = True
            return self.transcript.turns[index].text
        if self.transcript.is_scripted(request.task):
            ai_logger.error(f"Transcript {self.transcript.name} has no turn for task {request.task}")
            raise TranscriptExhaustedError(request.task, request.user_prompt)
        return await super()._complete(request)


def load_transcript(path: Union[str, Path]) -> Transcript:
    """Load a transcript file; a bare array of turns scripts every task."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, list):
        return Transcript(
            name=Path(path).stem,
            turns=[TranscriptTurn.model_validate(t) for t in data],
        )
    return Transcript.model_validate(data)
