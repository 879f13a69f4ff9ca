"""Stages A and C: run base or retrieval-augmented episodes under budgets.

Every episode owns its environment state and token ledger; batches run
episodes concurrently and emit a canonically ordered list regardless of
schedule.  Transcripts carry enough structure (initial observation plus
typed turns) that hint extraction and dataset construction never re-run
episodes.

Ledger convention: the prompt component is counted on the prompt *without*
the hint block, and the block is charged separately per agent call (or once,
by configuration) at count_tokens(rendered block).  This keeps the rag-base
difference exactly steps x block_cost + retrieval_tokens under the proxy
tokenizer, at the price of a +/-1 byte-rounding drift from the raw bytes
actually sent.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .agents import (
    AgentTurn,
    MalformedTurn,
    PromptAssembly,
    Scaffold,
    assemble_prompt,
    few_shot_for,
    header_for,
    parse_turn,
)
from .envs import core as envcore
from .envs.types import HOUSE, EpisodeOutcome, Observation, TaskSpec
from .hints import FailureRecord, HintBank
from .llm.backends import Backend, CompletionRequest
from .llm.tokens import count_tokens
from .retrieval import HintBlock, RetrievalQuery, RetrievalStats, Scorer, select_hints

logger = logging.getLogger(__name__)

MAX_TURN_ATTEMPTS = 3
NOOP_OBSERVATION = "Nothing happens."


class EpisodeAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    mode: str                     # base | rag
    scaffold: Scaffold
    backend: Backend
    k: int = 3
    scorer: Scorer | None = None
    charge_block: str = "per_step"   # per_step | once
    max_completion_tokens: int = 256
    temperature: float = 0.0
    include_few_shot: bool = True    # distilled students run prompt-minimal

    def __post_init__(self) -> None:
        if self.mode not in ("base", "rag"):
            raise ValueError(f"unknown mode: {self.mode!r}")
        if self.mode == "rag" and self.scorer is None:
            raise ValueError("rag mode requires a scorer")
        if self.charge_block not in ("per_step", "once"):
            raise ValueError(f"unknown charge_block: {self.charge_block!r}")


@dataclass
class TokenLedger:
    """Per-episode accounting. total is the sum of the four components."""

    prompt_tokens: int = 0
    completion_tokens: int = 0
    retrieval_tokens: int = 0
    hint_block_tokens_per_step: int = 0
    hint_block_charges: int = 0
    charge_mode: str = "per_step"

    @property
    def hint_block_tokens_total(self) -> int:
        if self.hint_block_tokens_per_step == 0:
            return 0
        if self.charge_mode == "once":
            return self.hint_block_tokens_per_step if self.hint_block_charges else 0
        return self.hint_block_tokens_per_step * self.hint_block_charges

    @property
    def total(self) -> int:
        return (
            self.prompt_tokens
            + self.completion_tokens
            + self.retrieval_tokens
            + self.hint_block_tokens_total
        )

    def to_dict(self) -> dict:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "retrieval_tokens": self.retrieval_tokens,
            "hint_block_tokens_per_step": self.hint_block_tokens_per_step,
            "hint_block_charges": self.hint_block_charges,
            "charge_mode": self.charge_mode,
            "hint_block_tokens_total": self.hint_block_tokens_total,
            "total": self.total,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TokenLedger":
        return cls(
            prompt_tokens=d["prompt_tokens"],
            completion_tokens=d["completion_tokens"],
            retrieval_tokens=d["retrieval_tokens"],
            hint_block_tokens_per_step=d["hint_block_tokens_per_step"],
            hint_block_charges=d["hint_block_charges"],
            charge_mode=d.get("charge_mode", "per_step"),
        )


@dataclass(frozen=True)
class QualityAudit:
    invalid_action_count: int
    has_repeated_noop: bool
    aborted: bool
    malformed_attempts: int = 0

    def to_dict(self) -> dict:
        return {
            "invalid_action_count": self.invalid_action_count,
            "has_repeated_noop": self.has_repeated_noop,
            "aborted": self.aborted,
            "malformed_attempts": self.malformed_attempts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QualityAudit":
        return cls(
            invalid_action_count=d["invalid_action_count"],
            has_repeated_noop=d["has_repeated_noop"],
            aborted=d["aborted"],
            malformed_attempts=d.get("malformed_attempts", 0),
        )


@dataclass(frozen=True)
class TurnRecord:
    turn: AgentTurn
    observation: Observation
    action_valid: bool


@dataclass
class Trajectory:
    task: TaskSpec
    mode: str
    scaffold_kind: str
    initial_observation: str
    hint_block: HintBlock | None
    turns: list[TurnRecord]
    outcome: EpisodeOutcome
    ledger: TokenLedger
    audit: QualityAudit
    retrieval_invocations: int = 0
    backend_call_ids: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task": self.task.to_dict(),
            "mode": self.mode,
            "scaffold": self.scaffold_kind,
            "initial_observation": self.initial_observation,
            "hint_block": None
            if self.hint_block is None
            else {
                "hints": [
                    {"category": h.category, "text": h.text, "source_episode": h.source_episode}
                    for h in self.hint_block.hints
                ],
                "k_requested": self.hint_block.k_requested,
                "rendered": self.hint_block.rendered,
                "token_cost": self.hint_block.token_cost,
            },
            "turns": [
                {
                    "state": rec.turn.state_note,
                    "thought": rec.turn.thought,
                    "action": rec.turn.action,
                    "observation": rec.observation.text,
                    "step_index": rec.observation.step_index,
                    "valid": rec.action_valid,
                }
                for rec in self.turns
            ],
            "outcome": self.outcome.to_dict(),
            "ledger": self.ledger.to_dict(),
            "audit": self.audit.to_dict(),
            "retrieval_invocations": self.retrieval_invocations,
            # backend_call_ids stay in-memory only: they depend on request
            # interleaving, and serialized transcripts must not.
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        from .hints import Hint  # local to avoid a cycle at import time

        block = None
        if d.get("hint_block") is not None:
            hb = d["hint_block"]
            block = HintBlock(
                hints=tuple(
                    Hint(
                        category=h["category"],
                        text=h["text"],
                        source_episode=h.get("source_episode", ""),
                    )
                    for h in hb["hints"]
                ),
                k_requested=hb["k_requested"],
                rendered=hb["rendered"],
                token_cost=hb["token_cost"],
            )
        return cls(
            task=TaskSpec.from_dict(d["task"]),
            mode=d["mode"],
            scaffold_kind=d["scaffold"],
            initial_observation=d["initial_observation"],
            hint_block=block,
            turns=[
                TurnRecord(
                    turn=AgentTurn(
                        action=t["action"], thought=t.get("thought"), state_note=t.get("state")
                    ),
                    observation=Observation(text=t["observation"], step_index=t["step_index"]),
                    action_valid=t["valid"],
                )
                for t in d["turns"]
            ],
            outcome=EpisodeOutcome.from_dict(d["outcome"]),
            ledger=TokenLedger.from_dict(d["ledger"]),
            audit=QualityAudit.from_dict(d["audit"]),
            retrieval_invocations=d.get("retrieval_invocations", 0),
            backend_call_ids=list(d.get("backend_call_ids", [])),
        )


def next_turn(
    backend: Backend,
    assembly: PromptAssembly,
    scaffold: Scaffold,
    policy: PolicyConfig,
    ledger: TokenLedger,
    call_ids: list[int],
) -> tuple[AgentTurn, int]:
    """One parsed agent turn. Malformed completions are retried up to three
    attempts (each one billed); a third failure aborts the episode."""
    prompt = assemble_prompt(assembly, scaffold)
    base_prompt = (
        prompt
        if assembly.hint_block is None
        else assemble_prompt(assembly.without_hint_block(), scaffold)
    )
    request = CompletionRequest(
        messages=(("user", prompt),),
        max_tokens=policy.max_completion_tokens,
        temperature=policy.temperature,
        tag="agent_turn",
    )
    malformed = 0
    for _ in range(MAX_TURN_ATTEMPTS):
        result = backend.complete(request)
        call_ids.append(result.call_id)
        ledger.prompt_tokens += count_tokens(base_prompt)
        ledger.completion_tokens += result.completion_tokens
        if assembly.hint_block is not None:
            ledger.hint_block_charges += 1
        try:
            return parse_turn(result.text, scaffold), malformed
        except MalformedTurn as exc:
            malformed += 1
            logger.warning("malformed completion for turn (attempt %d): %s", malformed, exc)
    raise EpisodeAborted(f"{MAX_TURN_ATTEMPTS} malformed completions in a row")


def run_episode(task: TaskSpec, policy: PolicyConfig, bank: HintBank | None = None) -> Trajectory:
    """Run one episode start to finish.

    rag mode retrieves exactly once, before step 0, and re-sends the rendered
    block inside every prompt; an empty block (k=0 or empty partition)
    degrades the episode to base behavior.
    """
    if policy.mode == "rag" and bank is None:
        raise ValueError("rag mode requires a hint bank")

    state, first_obs = envcore.reset(task)
    ledger = TokenLedger(charge_mode=policy.charge_block)
    call_ids: list[int] = []
    stats = RetrievalStats()

    hint_block: HintBlock | None = None
    if policy.mode == "rag":
        query = RetrievalQuery(
            instruction=task.instruction,
            initial_observation=first_obs.text,
            env_kind=task.env_kind,
            explicit_category=task.category if task.env_kind == HOUSE else None,
        )
        block = select_hints(bank, query, policy.k, policy.scorer, stats)
        ledger.retrieval_tokens = stats.total_tokens
        call_ids.extend(stats.call_ids)
        if block.hints:
            hint_block = block
            ledger.hint_block_tokens_per_step = block.token_cost

    assembly = PromptAssembly(
        env_kind=task.env_kind,
        system_header=header_for(task.env_kind),
        hint_block=hint_block.rendered if hint_block else None,
        few_shot=few_shot_for(task.env_kind, policy.scaffold.kind) if policy.include_few_shot else "",
        task_block=first_obs.text,
        history=(),
    )

    turns: list[TurnRecord] = []
    history: tuple[tuple[AgentTurn, Observation], ...] = ()
    malformed_total = 0
    aborted = False
    outcome: EpisodeOutcome | None = None

    while outcome is None:
        try:
            turn, malformed = next_turn(
                policy.backend, assembly.with_history(history), policy.scaffold, policy, ledger, call_ids
            )
            malformed_total += malformed
        except EpisodeAborted:
            malformed_total += MAX_TURN_ATTEMPTS
            aborted = True
            outcome = EpisodeOutcome(success=False, score=0.0, steps_used=len(turns))
            break
        result = envcore.step(state, turn.action)
        turns.append(TurnRecord(turn=turn, observation=result.observation, action_valid=result.action_valid))
        history = history + ((turn, result.observation),)
        if result.done:
            outcome = result.outcome

    trajectory = Trajectory(
        task=task,
        mode=policy.mode,
        scaffold_kind=policy.scaffold.kind,
        initial_observation=first_obs.text,
        hint_block=hint_block,
        turns=turns,
        outcome=outcome,
        ledger=ledger,
        audit=QualityAudit(0, False, False),
        retrieval_invocations=stats.invocations,
        backend_call_ids=call_ids,
    )
    trajectory.audit = audit(trajectory, malformed_attempts=malformed_total, aborted=aborted)
    return trajectory


def _is_ineffective(record: TurnRecord) -> bool:
    return not record.action_valid or record.observation.text == NOOP_OBSERVATION


def audit(trajectory: Trajectory, malformed_attempts: int = 0, aborted: bool = False) -> QualityAudit:
    """Deterministic quality audit over the recorded turns.

    invalid_action_count counts env-invalid turns plus malformed completions;
    a repeated no-op is two consecutive identical actions that were both
    ineffective (invalid or observed as a no-op).
    """
    invalid = sum(1 for rec in trajectory.turns if not rec.action_valid) + malformed_attempts
    repeated = any(
        a.turn.action == b.turn.action and _is_ineffective(a) and _is_ineffective(b)
        for a, b in zip(trajectory.turns, trajectory.turns[1:])
    )
    return QualityAudit(
        invalid_action_count=invalid,
        has_repeated_noop=repeated,
        aborted=aborted,
        malformed_attempts=malformed_attempts,
    )


def _abort_placeholder(task: TaskSpec, policy: PolicyConfig, error: Exception) -> Trajectory:
    logger.error("episode %s aborted outside the turn loop: %s", task.id, error)
    return Trajectory(
        task=task,
        mode=policy.mode,
        scaffold_kind=policy.scaffold.kind,
        initial_observation="",
        hint_block=None,
        turns=[],
        outcome=EpisodeOutcome(success=False, score=0.0, steps_used=0),
        ledger=TokenLedger(charge_mode=policy.charge_block),
        audit=QualityAudit(0, False, True),
        retrieval_invocations=0,
        backend_call_ids=[],
    )


def run_split(
    tasks: list[TaskSpec],
    policy: PolicyConfig,
    bank: HintBank | None = None,
    parallelism: int = 1,
) -> list[Trajectory]:
    """Run a batch of independent episodes. Output is sorted by task id, so
    the serialized result is identical for any parallelism degree (given a
    backend whose replies do not depend on request interleaving)."""

    def run_one(task: TaskSpec) -> Trajectory:
        try:
            return run_episode(task, policy, bank)
        except Exception as exc:  # noqa: BLE001 - a bad episode must not kill the batch
            return _abort_placeholder(task, policy, exc)

    if parallelism <= 1:
        results = [run_one(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(run_one, tasks))
    return sorted(results, key=lambda t: t.task.id)


def save_trajectories(trajectories: list[Trajectory], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trajectory in trajectories:
            fh.write(json.dumps(trajectory.to_dict(), sort_keys=True))
            fh.write("\n")


def load_trajectories(path: str) -> list[Trajectory]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(Trajectory.from_dict(json.loads(line)))
    return out


def failure_records(trajectories: list[Trajectory]) -> list[FailureRecord]:
    """Failed, non-aborted episodes reshaped for hint extraction."""
    records = []
    for trajectory in trajectories:
        if trajectory.outcome.success or trajectory.audit.aborted:
            continue
        steps = tuple(
            (rec.turn.action, rec.observation.text.replace("\n", " ")) for rec in trajectory.turns
        )
        records.append(
            FailureRecord(
                task=trajectory.task,
                goal_text=trajectory.task.instruction,
                steps=steps,
                outcome=trajectory.outcome,
            )
        )
    return records
