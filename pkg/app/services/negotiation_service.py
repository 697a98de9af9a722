"""
Negotiation service: round-robin thesis, critique and synthesis over registry conflicts.
"""
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field, ValidationError

from app.core import prompts as P
from app.core.app_logging import LoggerMixin, log_error, negotiation_logger
from app.core.config import RunConfig, check_weights
from app.core.exceptions import DecodeError, InvalidArgumentError, ProjectionError, ProviderError
from app.schemas.conflict import (
    Conflict,
    ConflictRegistry,
    ConflictStatus,
    Critique,
    DecompositionDraft,
    NegotiationTrace,
    RoundRecord,
    ScheduleEntry,
    SynthesisProposal,
    TraceEvent,
)
from app.schemas.provider import ChatRequest
from app.schemas.requirement import QualityDimension, QualityVector, Requirement, RequirementSet
from app.services.agent_service import AgentSpec, load_agent_specs
from app.services.ai_service import BaseProvider
from app.services.metrics_service import project_quality
from app.utils.json_utils import extract_json
from app.utils.text_utils import stable_hash


THESIS_INSTRUCTION = (
    "You are the focus agent for this conflict. Propose a revision of the focal requirement "
    "that protects your quality concern while acknowledging the opposing requirement. "
    "Answer in a short paragraph."
)

CRITIQUE_INSTRUCTION = (
    "Evaluate the thesis against your own quality constraints. State what you can accept, "
    "what you object to and what trade-off you would need. Answer in a short paragraph."
)


def _flat(text: str) -> str:
    return " ".join(text.split())


def aggregate_objective(scores: Union[QualityVector, Sequence[float]], weights: Sequence[float]) -> float:
    """Weighted sum of the quality projection."""
    w = check_weights(weights)
    values = scores.components if isinstance(scores, QualityVector) else tuple(scores)
    if len(values) != len(w):
        raise InvalidArgumentError(f"expected {len(w)} quality scores, got {len(values)}")
    return float(sum(wi * qi for wi, qi in zip(w, values)))


async def check_convergence(prev: str, next_text: str, epsilon: float, provider: BaseProvider) -> bool:
    """True iff successive syntheses are more similar than 1 - epsilon."""
    if not 0.0 < epsilon < 1.0:
        raise InvalidArgumentError(f"epsilon must lie in (0, 1), got {epsilon}")
    return await provider.similarity_f1(prev, next_text) > 1.0 - epsilon


def agent_order(seed: int) -> List[QualityDimension]:
    """Seed-shuffled focus order of the five agents."""
    return sorted(QualityDimension, key=lambda d: stable_hash("focus-order", seed, d.value))


def rotate(order: Sequence[QualityDimension], shift: int) -> List[QualityDimension]:
    if not order:
        return []
    shift %= len(order)
    return list(order[shift:]) + list(order[:shift])


def select_focal(
    conflict: Conflict,
    by_id: Dict[str, Requirement],
    weights: Sequence[float],
) -> Tuple[Requirement, Requirement]:
    """Focal and opposing requirement; the party with the larger weight proposes."""
    left, right = by_id[conflict.left_id], by_id[conflict.right_id]
    if left.dimension is right.dimension:
        return left, right
    key_left = (-weights[left.dimension.axis], left.dimension.axis)
    key_right = (-weights[right.dimension.axis], right.dimension.axis)
    return (left, right) if key_left <= key_right else (right, left)


class ConflictState(BaseModel):
    """Mutable negotiation state of one conflict."""

    conflict: Conflict
    focal: Requirement
    opponent: Requirement
    status: ConflictStatus = ConflictStatus.UNRESOLVED
    rounds: List[RoundRecord] = Field(default_factory=list)
    previous_synthesis: Optional[str] = None
    resolution: Optional[SynthesisProposal] = None
    last_proposal: Optional[SynthesisProposal] = None

    @property
    def proposer(self) -> QualityDimension:
        return self.focal.dimension

    @property
    def next_round(self) -> int:
        return len(self.rounds) + 1


class Negotiator(LoggerMixin):
    """Runs the dialectical loop for one seed."""

    def __init__(
        self,
        config: RunConfig,
        provider: BaseProvider,
        seed: int,
        specs: Optional[Sequence[AgentSpec]] = None,
    ):
        self.config = config
        self.provider = provider
        self.seed = seed
        self.specs: Dict[QualityDimension, AgentSpec] = {
            s.dimension: s for s in (specs if specs is not None else load_agent_specs())
        }

    # Prompt assembly

    def _header(self, state: ConflictState) -> List[str]:
        lines = [
            f"{P.CONFLICT_MARKER} {state.conflict.conflict_id} | {state.conflict.kind.value}",
            f"{P.ROUND_MARKER} {state.next_round}",
            f"{P.FOCAL_MARKER} {state.focal.id} | {_flat(state.focal.description)}",
            f"{P.OPPONENT_MARKER} {state.opponent.id} | {_flat(state.opponent.description)}",
        ]
        if state.previous_synthesis:
            lines.append(f"{P.PREVIOUS_MARKER} {_flat(state.previous_synthesis)}")
        return lines

    def _role(self, dim: QualityDimension) -> str:
        spec = self.specs.get(dim)
        return spec.role_definition if spec else f"You are the {dim.value} agent."

    def _request(self, system: str, lines: List[str], task: str, persona: str) -> ChatRequest:
        return ChatRequest(
            system_prompt=system,
            user_prompt="\n".join(lines),
            temperature=self.config.temperature,
            max_tokens=self.config.max_tokens,
            seed=self.seed,
            task=task,
            persona=persona,
        )

    def thesis_request(self, focus: QualityDimension, state: ConflictState) -> ChatRequest:
        return self._request(
            f"{self._role(focus)}\n\n{THESIS_INSTRUCTION}",
            self._header(state),
            P.Task.THESIS,
            focus.value,
        )

    def critique_request(self, critic: QualityDimension, state: ConflictState, thesis: str) -> ChatRequest:
        return self._request(
            f"{self._role(critic)}\n\n{CRITIQUE_INSTRUCTION}",
            self._header(state) + [f"{P.THESIS_MARKER} {_flat(thesis)}"],
            P.Task.CRITIQUE,
            critic.value,
        )

    def synthesis_request(self, state: ConflictState, thesis: str, critiques: List[Critique]) -> ChatRequest:
        lines = self._header(state) + [f"{P.THESIS_MARKER} {_flat(thesis)}"]
        lines += [f"{P.CRITIQUE_MARKER} {c.agent}: {_flat(c.text)}" for c in critiques]
        return self._request(P.MODERATOR_SYSTEM_PROMPT, lines, P.Task.SYNTHESIZE, P.MODERATOR_PERSONA)

    # Synthesis handling

    def _parse_candidates(self, raw: str, state: ConflictState, focus: QualityDimension) -> List[SynthesisProposal]:
        data = extract_json(raw)
        if isinstance(data, dict):
            items = data.get("candidates", [data])
        elif isinstance(data, list):
            items = data
        else:
            items = []

        proposals = []
        for item in items:
            if not isinstance(item, dict):
                continue
            text = item.get("proposed_text")
            if not isinstance(text, str) or not text.strip():
                continue
            try:
                claim = ConflictStatus(str(item.get("status_claim", "Partial")))
                drafts = [DecompositionDraft.model_validate(d) for d in item.get("decomposition") or []]
                proposals.append(SynthesisProposal(
                    conflict_id=state.conflict.conflict_id,
                    proposer=focus.value,
                    focal_id=state.focal.id,
                    proposed_text=text.strip(),
                    decomposition=drafts,
                    status_claim=claim,
                ))
            except (ValueError, ValidationError) as e:
                self.logger.warning(f"Dropping malformed synthesis candidate for {state.conflict.conflict_id}: {e}")
        if not proposals:
            raise DecodeError(f"no usable synthesis candidate for {state.conflict.conflict_id}")
        return proposals

    async def _rank(self, proposals: List[SynthesisProposal]) -> SynthesisProposal:
        """Highest aggregate objective wins; ties keep the earlier candidate."""
        if len(proposals) == 1:
            return proposals[0]
        best, best_score = proposals[0], None
        for proposal in proposals:
            vector = await project_quality(proposal.proposed_text, self.config, self.provider, self.seed)
            score = aggregate_objective(vector, self.config.weights)
            if best_score is None or score > best_score:
                best, best_score = proposal, score
        return best

    async def run_round(self, focus: QualityDimension, state: ConflictState) -> RoundRecord:
        """One thesis, four critiques and a moderated synthesis."""
        if state.status.is_terminal:
            raise InvalidArgumentError(f"{state.conflict.conflict_id} is already {state.status.value}")
        round_index = state.next_round
        if round_index > self.config.round_cap:
            raise InvalidArgumentError(f"round {round_index} exceeds the cap of {self.config.round_cap}")

        thesis = ""
        critiques: List[Critique] = []
        state.last_proposal = None
        try:
            thesis = await self.provider.chat(self.thesis_request(focus, state))

            # Critiques are collected in dimension order
            critics = [d for d in QualityDimension if d is not focus]
            for critic in critics:
                text = await self.provider.chat(self.critique_request(critic, state, thesis))
                critiques.append(Critique(agent=critic.value, text=text.strip()))

            raw = await self.provider.chat(self.synthesis_request(state, thesis, critiques))
            proposal = await self._rank(self._parse_candidates(raw, state, focus))
            reference = state.previous_synthesis or thesis
            similarity = await self.provider.similarity_f1(reference, proposal.proposed_text)
        except (ProviderError, ProjectionError) as e:
            log_error(e, {"conflict": state.conflict.conflict_id, "round": round_index})
            negotiation_logger.warning(
                f"Round {round_index} of {state.conflict.conflict_id} recorded as Unresolved: {e}"
            )
            return RoundRecord(
                round_index=round_index,
                focus_agent=focus.value,
                thesis=thesis.strip(),
                critiques=critiques,
                outcome=ConflictStatus.UNRESOLVED,
                error=str(e),
            )

        state.last_proposal = proposal
        return RoundRecord(
            round_index=round_index,
            focus_agent=focus.value,
            thesis=thesis.strip(),
            critiques=critiques,
            synthesis=proposal.proposed_text,
            similarity_to_previous=similarity,
            outcome=proposal.status_claim,
        )

    async def negotiate(
        self,
        requirement_set: RequirementSet,
        registry: ConflictRegistry,
        order: Optional[Sequence[QualityDimension]] = None,
    ) -> Tuple[ConflictRegistry, NegotiationTrace]:
        by_id = requirement_set.by_id()
        states: Dict[str, ConflictState] = {}
        for conflict in registry.negotiable():
            if conflict.left_id not in by_id or conflict.right_id not in by_id:
                negotiation_logger.warning(f"Skipping {conflict.conflict_id}: party not in the requirement set")
                continue
            focal, opponent = select_focal(conflict, by_id, self.config.weights)
            states[conflict.conflict_id] = ConflictState(conflict=conflict, focal=focal, opponent=opponent)

        base_order = list(order) if order is not None else agent_order(self.seed)
        events: List[TraceEvent] = []
        schedule: List[ScheduleEntry] = []
        proposals: List[SynthesisProposal] = []

        for k in range(1, self.config.round_cap + 1):
            focus_order = rotate(base_order, k - 1)
            schedule.append(ScheduleEntry(round_index=k, focus_order=[d.value for d in focus_order]))
            for focus in focus_order:
                # registry order is severity order
                turn = [
                    s for s in states.values()
                    if s.proposer is focus and not s.status.is_terminal and s.next_round == k
                ]
                for state in turn:
                    record = await self.run_round(focus, state)
                    state.rounds.append(record)
                    events.append(TraceEvent(conflict_id=state.conflict.conflict_id, record=record))
                    self._apply_outcome(state, record)

        for state in states.values():
            if not state.status.is_terminal:
                state.status = state.status.transition(ConflictStatus.ESCALATED)
                negotiation_logger.info(
                    f"{state.conflict.conflict_id} escalated after {len(state.rounds)} round(s)"
                )
            if state.resolution is not None:
                proposals.append(state.resolution)

        conflicts = []
        for conflict in registry.conflicts:
            state = states.get(conflict.conflict_id)
            if state is None:
                conflicts.append(conflict)
                continue
            conflicts.append(conflict.model_copy(update={
                "status": state.status,
                "rounds": list(state.rounds),
                "resolution": state.resolution,
            }))

        trace = NegotiationTrace(
            events=events,
            total_steps=sum(e.record.steps for e in events),
            total_rounds=len(events),
            schedule=schedule,
            proposals=proposals,
            final_statuses={cid: s.status for cid, s in states.items()},
        )
        return ConflictRegistry(conflicts=conflicts, source_set_id=registry.source_set_id), trace

    def _apply_outcome(self, state: ConflictState, record: RoundRecord) -> None:
        cid = state.conflict.conflict_id
        if record.error is None:
            converged = (
                record.round_index >= 2
                and record.outcome is not ConflictStatus.CONSENSUS
                and record.similarity_to_previous > 1.0 - self.config.epsilon
            )
            state.previous_synthesis = record.synthesis
        else:
            converged = False

        state.status = state.status.advance(record.outcome)
        if state.status is ConflictStatus.CONSENSUS:
            state.resolution = state.last_proposal
            negotiation_logger.info(f"{cid} reached Consensus in round {record.round_index}")
        elif converged:
            # Converged without agreement
            state.status = state.status.advance(ConflictStatus.PARTIAL).transition(ConflictStatus.ESCALATED)
            negotiation_logger.info(
                f"{cid} converged at similarity {record.similarity_to_previous:.3f} without Consensus; escalating"
            )


async def run_phase2(
    requirement_set: RequirementSet,
    registry: ConflictRegistry,
    config: RunConfig,
    provider: BaseProvider,
    seed: int,
    specs: Optional[Sequence[AgentSpec]] = None,
    order: Optional[Sequence[QualityDimension]] = None,
) -> Tuple[RequirementSet, ConflictRegistry, NegotiationTrace]:
    """Negotiate every negotiable conflict; requirement text is left untouched."""
    negotiator = Negotiator(config, provider, seed, specs=specs)
    final_registry, trace = await negotiator.negotiate(requirement_set, registry, order=order)
    negotiation_logger.info(
        f"Negotiation finished: {trace.total_rounds} round(s), {trace.total_steps} step(s), "
        f"{sum(1 for s in trace.final_statuses.values() if s is ConflictStatus.CONSENSUS)} consensus"
    )
    return requirement_set.relabel(2), final_registry, trace


def render_trace_markdown(trace: NegotiationTrace, registry: Optional[ConflictRegistry] = None) -> str:
    """Round boxes per conflict, in trace order."""
    if not trace.events:
        return "No conflicts detected.\n"

    kinds = {c.conflict_id: c.kind.value for c in registry.conflicts} if registry else {}
    lines: List[str] = []
    seen: List[str] = []
    for event in trace.events:
        if event.conflict_id not in seen:
            seen.append(event.conflict_id)

    for cid in seen:
        kind = f" ({kinds[cid]})" if cid in kinds else ""
        status = trace.final_statuses.get(cid)
        lines.append(f"### Conflict {cid}{kind}")
        lines.append("")
        for record in trace.rounds_for(cid):
            lines.append("```")
            lines.append(f"Round {record.round_index} | focus: {record.focus_agent} | {record.outcome.value.upper()}")
            if record.thesis:
                lines.append(f"Thesis: {_flat(record.thesis)}")
            for critique in record.critiques:
                lines.append(f"Critique ({critique.agent}): {_flat(critique.text)}")
            if record.synthesis:
                lines.append(f"Synthesis: {_flat(record.synthesis)}")
                lines.append(f"Similarity to previous: {record.similarity_to_previous:.3f}")
            if record.error:
                lines.append(f"Error: {record.error}")
            lines.append("```")
            lines.append("")
        if status is not None:
            lines.append(f"Final status: **{status.value}**")
            lines.append("")
    return "\n".join(lines)
