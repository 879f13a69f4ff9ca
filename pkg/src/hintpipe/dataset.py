"""Stage D: filter trajectories and emit hint-free training datasets.

Serialization is strip-by-construction: examples are re-rendered from the
structured trajectory (system header, instruction plus initial observation,
then step turns), so the hint block and few-shot demonstrations are never
present rather than deleted as substrings.  Hint text an agent happened to
echo inside its own thoughts is agent behavior and is kept; the purity
scanner therefore redacts thought contents before matching.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

from .agents import AgentTurn, header_for, parse_turn, render_turn, scaffold_for
from .envs.types import SHOP
from .hints import HintBank
from .llm.tokens import count_tokens
from .retrieval import HOUSE_BLOCK_PREAMBLE, SHOP_BLOCK_PREAMBLE
from .rollout import Trajectory

logger = logging.getLogger(__name__)

MAX_SEQ_LEN = 1024
SHOP_LABEL_SMOOTHING = 0.1
HOUSE_LABEL_SMOOTHING = 0.0
FEW_SHOT_MATCH_WINDOW = 40

KIND_SOURCE_MODE = {"sft": "base", "distill": "rag"}


class ExampleOverBudget(ValueError):
    """Serialized text exceeds the sequence budget; examples are dropped,
    never truncated (a cut action sequence teaches broken behavior)."""


@dataclass(frozen=True)
class FilterPolicy:
    require_success: bool = True
    min_score: float = 67.0
    max_invalid: int = 2
    forbid_repeated_noop: bool = True

    def to_dict(self) -> dict:
        return {
            "require_success": self.require_success,
            "min_score": self.min_score,
            "max_invalid": self.max_invalid,
            "forbid_repeated_noop": self.forbid_repeated_noop,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterPolicy":
        return cls(
            require_success=d.get("require_success", True),
            min_score=d.get("min_score", 67.0),
            max_invalid=d.get("max_invalid", 2),
            forbid_repeated_noop=d.get("forbid_repeated_noop", True),
        )


@dataclass(frozen=True)
class TrainingExample:
    text: str
    meta: dict

    def to_dict(self) -> dict:
        return {"text": self.text, "meta": self.meta}


@dataclass
class DatasetManifest:
    kind: str
    counts: dict
    filter_policy: dict
    bank_version: str | None
    content_hash: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "counts": self.counts,
            "filter_policy": self.filter_policy,
            "bank_version": self.bank_version,
            "content_hash": self.content_hash,
        }


@dataclass
class PurityReport:
    scanned: int
    violations: list[dict] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"scanned": self.scanned, "violations": self.violations, "clean": self.clean}


def _exclusion_reason(trajectory: Trajectory, kind: str, policy: FilterPolicy) -> str | None:
    if trajectory.mode != KIND_SOURCE_MODE[kind]:
        return "mode"
    if trajectory.audit.aborted:
        return "aborted"
    if trajectory.task.env_kind == SHOP:
        if trajectory.outcome.score < policy.min_score:
            return "score"
    elif policy.require_success and not trajectory.outcome.success:
        return "outcome"
    if trajectory.audit.invalid_action_count > policy.max_invalid:
        return "invalid_actions"
    if policy.forbid_repeated_noop and trajectory.audit.has_repeated_noop:
        return "repeated_noop"
    return None


def filter_for_training(
    trajectories: list[Trajectory], kind: str, policy: FilterPolicy
) -> list[Trajectory]:
    """Keep trajectories from the kind's source mode that met the success or
    score bar with a clean audit."""
    if kind not in KIND_SOURCE_MODE:
        raise ValueError(f"unknown dataset kind: {kind!r}")
    return [t for t in trajectories if _exclusion_reason(t, kind, policy) is None]


def serialize_trajectory(trajectory: Trajectory, kind: str) -> TrainingExample:
    """Render one training example from structured data only: header, the
    live task text, then every step turn. No hint block, no few-shot."""
    env_kind = trajectory.task.env_kind
    parts = [header_for(env_kind), "", trajectory.initial_observation]
    for rec in trajectory.turns:
        parts.append(render_turn(rec.turn, env_kind))
        parts.append(rec.observation.text)
    text = "\n".join(parts) + "\n"

    tokens = count_tokens(text)
    if tokens > MAX_SEQ_LEN:
        raise ExampleOverBudget(
            f"example for {trajectory.task.id} needs {tokens} proxy tokens (> {MAX_SEQ_LEN})"
        )
    meta = {
        "env_kind": env_kind,
        "scaffold": trajectory.scaffold_kind,
        "task_id": trajectory.task.id,
        "label_smoothing": SHOP_LABEL_SMOOTHING if env_kind == SHOP else HOUSE_LABEL_SMOOTHING,
        "max_seq_len": MAX_SEQ_LEN,
    }
    return TrainingExample(text=text, meta=meta)


def deserialize_example(example: TrainingExample) -> tuple[str, list[tuple[AgentTurn, str]]]:
    """Re-parse an example into (initial observation text, [(turn, obs)]).
    Inverse of serialize_trajectory; lets tests close the round-trip."""
    env_kind = example.meta["env_kind"]
    scaffold = scaffold_for(example.meta["scaffold"], env_kind)
    header = header_for(env_kind)
    body = example.text
    if not body.startswith(header + "\n\n"):
        raise ValueError("example does not begin with the environment header")
    body = body[len(header) + 2 :]

    agent_starters = ("> ", "State: ", "Action: ")
    lines = body.rstrip("\n").split("\n")
    initial: list[str] = []
    i = 0
    while i < len(lines) and not lines[i].startswith(agent_starters):
        initial.append(lines[i])
        i += 1

    turns: list[tuple[AgentTurn, str]] = []
    while i < len(lines):
        turn_lines: list[str] = []
        while i < len(lines) and lines[i].startswith(agent_starters):
            turn_lines.append(lines[i])
            is_action = not (
                lines[i].startswith(("> state: ", "> think: ", "State: ", "Action: think["))
            )
            i += 1
            if is_action:
                break
        obs_lines: list[str] = []
        while i < len(lines) and not lines[i].startswith(agent_starters):
            obs_lines.append(lines[i])
            i += 1
        turns.append((parse_turn("\n".join(turn_lines), scaffold), "\n".join(obs_lines)))
    return "\n".join(initial), turns


def build_dataset(
    trajectories: list[Trajectory],
    kind: str,
    policy: FilterPolicy,
    out_path: str,
    bank: HintBank | None = None,
) -> DatasetManifest:
    """Filter, serialize, and write one JSONL dataset in canonical task-id
    order, plus a manifest whose counts always reconcile with the input."""
    excluded: dict[str, int] = {}
    kept: list[Trajectory] = []
    for trajectory in trajectories:
        reason = _exclusion_reason(trajectory, kind, policy)
        if reason is None:
            kept.append(trajectory)
        else:
            excluded[reason] = excluded.get(reason, 0) + 1

    kept.sort(key=lambda t: t.task.id)
    examples: list[TrainingExample] = []
    dropped_over_budget = 0
    for trajectory in kept:
        try:
            examples.append(serialize_trajectory(trajectory, kind))
        except ExampleOverBudget as exc:
            dropped_over_budget += 1
            logger.warning("dropping over-budget example: %s", exc)

    lines = [json.dumps(e.to_dict(), sort_keys=True) for e in examples]
    content = "".join(line + "\n" for line in lines)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(content)

    bank_version = None
    if bank is not None:
        bank_version = hashlib.sha256(
            json.dumps(
                {c: [h.text for h in hs] for c, hs in bank.partitions.items()}, sort_keys=True
            ).encode("utf-8")
        ).hexdigest()[:16]

    return DatasetManifest(
        kind=kind,
        counts={
            "input": len(trajectories),
            "kept": len(kept),
            "excluded": excluded,
            "serialized": len(examples),
            "dropped_over_budget": dropped_over_budget,
        },
        filter_policy=policy.to_dict(),
        bank_version=bank_version,
        content_hash=hashlib.sha256(content.encode("utf-8")).hexdigest(),
    )


def load_examples(path: str) -> list[TrainingExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(TrainingExample(text=d["text"], meta=d["meta"]))
    return out


def _redact_thoughts(text: str) -> str:
    """Blank out thought contents: hint echoes inside an agent's own thoughts
    are behavior, not structure, and must not trip the scanner."""
    lines = []
    for line in text.split("\n"):
        if line.startswith("> think: "):
            lines.append("> think:")
        elif line.startswith("Action: think[") and line.endswith("]"):
            lines.append("Action: think[]")
        else:
            lines.append(line)
    return "\n".join(lines)


def _ngram_index(text: str, width: int) -> set[str]:
    return {text[i : i + width] for i in range(max(0, len(text) - width + 1))}


def verify_purity(
    dataset_path: str, bank: HintBank | None, few_shot_assets: list[str]
) -> PurityReport:
    """Scan every example for structural leakage: bank hint text, any
    40-character run of a few-shot asset, or a hint-block preamble line.
    Report-only; one entry per (example, finding)."""
    examples = load_examples(dataset_path)
    hint_texts: list[str] = []
    if bank is not None:
        seen: set[str] = set()
        for hints in bank.partitions.values():
            for hint in hints:
                if hint.text not in seen:
                    seen.add(hint.text)
                    hint_texts.append(hint.text)
    preamble_lines = set(HOUSE_BLOCK_PREAMBLE.split("\n")) | set(SHOP_BLOCK_PREAMBLE.split("\n"))

    asset_grams: set[str] = set()
    for asset in few_shot_assets:
        asset_grams |= _ngram_index(asset, FEW_SHOT_MATCH_WINDOW)

    report = PurityReport(scanned=len(examples))
    for index, example in enumerate(examples):
        text = _redact_thoughts(example.text)
        task_id = example.meta.get("task_id", "?")
        for hint_text in hint_texts:
            if hint_text and hint_text in text:
                report.violations.append(
                    {"example": index, "task_id": task_id, "kind": "hint", "detail": hint_text}
                )
        for line in preamble_lines:
            if line in text:
                report.violations.append(
                    {"example": index, "task_id": task_id, "kind": "preamble", "detail": line}
                )
        matched_gram = next(
            (
                text[i : i + FEW_SHOT_MATCH_WINDOW]
                for i in range(max(0, len(text) - FEW_SHOT_MATCH_WINDOW + 1))
                if text[i : i + FEW_SHOT_MATCH_WINDOW] in asset_grams
            ),
            None,
        )
        if matched_gram is not None:
            report.violations.append(
                {"example": index, "task_id": task_id, "kind": "few_shot", "detail": matched_gram}
            )
    return report
