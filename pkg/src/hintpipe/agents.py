"""Prompt scaffolds: assembly, turn rendering, and strict turn parsing.

A turn is one model completion holding an optional state note, an optional
thought, and exactly one environment action.  House turns use the ``> ``
line convention, shop turns the ``Action:`` / ``State:`` convention; the
parser accepts either so transcripts from both environments round-trip.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .envs.types import HOUSE, SHOP, Observation

SEPARATOR = "============"

HOUSE_HEADER = "Interact with a household to solve a task."
SHOP_HEADER = (
    "You are an intelligent WebShop assistant.\n"
    "Your job is to interact with the environment using the `[]` buttons only.\n"
    "You have 15 interactions to buy an item that is closest to the instruction."
)


class MalformedTurn(ValueError):
    """The completion does not parse into a turn for the active scaffold."""


@dataclass(frozen=True)
class Scaffold:
    kind: str                 # react | stateact | act
    emits_thought: bool
    emits_state: bool


def scaffold_for(kind: str, env_kind: str) -> Scaffold:
    """Build the scaffold for an environment. Shop scaffolds drop the thought
    channel by default; `act` is thought- and state-free everywhere."""
    if kind == "react":
        return Scaffold(kind="react", emits_thought=env_kind != SHOP, emits_state=False)
    if kind == "stateact":
        return Scaffold(kind="stateact", emits_thought=env_kind != SHOP, emits_state=True)
    if kind == "act":
        return Scaffold(kind="act", emits_thought=False, emits_state=False)
    raise ValueError(f"unknown scaffold kind: {kind!r}")


@dataclass(frozen=True)
class AgentTurn:
    action: str
    thought: str | None = None
    state_note: str | None = None

    def __post_init__(self) -> None:
        if not self.action:
            raise ValueError("action must be non-empty")

    def to_dict(self) -> dict:
        return {"state": self.state_note, "thought": self.thought, "action": self.action}

    @classmethod
    def from_dict(cls, d: dict) -> "AgentTurn":
        return cls(action=d["action"], thought=d.get("thought"), state_note=d.get("state"))


def render_turn(turn: AgentTurn, env_kind: str) -> str:
    lines: list[str] = []
    if env_kind == HOUSE:
        if turn.state_note is not None:
            lines.append(f"> state: {turn.state_note}")
        if turn.thought is not None:
            lines.append(f"> think: {turn.thought}")
        lines.append(f"> {turn.action}")
    else:
        if turn.state_note is not None:
            lines.append(f"State: {turn.state_note}")
        if turn.thought is not None:
            lines.append(f"Action: think[{turn.thought}]")
        lines.append(f"Action: {turn.action}")
    return "\n".join(lines)


def parse_turn(raw: str, scaffold: Scaffold) -> AgentTurn:
    """Parse one completion. Strict: a missing action line, a missing state
    note under stateact, or a channel the scaffold does not emit all raise
    MalformedTurn; the caller records an invalid no-op step and may retry."""
    state_note: str | None = None
    thought: str | None = None
    action: str | None = None

    for line in raw.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("> state: "):
            candidate = line[len("> state: "):]
            state_note = state_note if state_note is not None else candidate
        elif line.startswith("State: "):
            candidate = line[len("State: "):]
            state_note = state_note if state_note is not None else candidate
        elif line.startswith("> think: "):
            candidate = line[len("> think: "):]
            thought = thought if thought is not None else candidate
        elif line.startswith("Action: think[") and line.endswith("]"):
            candidate = line[len("Action: think["):-1]
            thought = thought if thought is not None else candidate
        elif line.startswith("think[") and line.endswith("]"):
            candidate = line[len("think["):-1]
            thought = thought if thought is not None else candidate
        elif line.startswith("Action: "):
            action = line[len("Action: "):]
            break
        elif line.startswith("> "):
            action = line[len("> "):]
            break

    if not action:
        raise MalformedTurn(f"no action line in completion: {raw[:80]!r}")
    if scaffold.emits_state and state_note is None:
        raise MalformedTurn("stateact turn is missing its state note")
    if not scaffold.emits_state and state_note is not None:
        raise MalformedTurn("scaffold does not emit state notes")
    if not scaffold.emits_thought and thought is not None:
        raise MalformedTurn("scaffold does not emit thoughts")
    return AgentTurn(action=action, thought=thought, state_note=state_note)


@lru_cache(maxsize=None)
def few_shot_for(env_kind: str, scaffold_kind: str) -> str:
    """Fixed few-shot demonstrations per (env, scaffold), stored as versioned
    plain-text assets: two examples for house, one for shop."""
    name = f"{env_kind}_{scaffold_kind}.txt"
    return (resources.files("hintpipe") / "assets" / name).read_text(encoding="utf-8").strip()


def header_for(env_kind: str) -> str:
    return HOUSE_HEADER if env_kind == HOUSE else SHOP_HEADER


def examples_line_for(env_kind: str) -> str:
    return "Here are 2 examples:" if env_kind == HOUSE else "Here is 1 example:"


@dataclass(frozen=True)
class PromptAssembly:
    """Everything needed to render one live prompt.

    Rendered region order is: system header (the task description), the
    injected hint block when present, the few-shot demonstrations, the
    "Here is the task." marker, the live task text, then the transcript so
    far. The hint block never appears anywhere else.
    """

    env_kind: str
    system_header: str
    hint_block: str | None
    few_shot: str
    task_block: str
    history: tuple[tuple[AgentTurn, Observation], ...] = field(default_factory=tuple)

    def with_history(self, history: tuple[tuple[AgentTurn, Observation], ...]) -> "PromptAssembly":
        return PromptAssembly(
            env_kind=self.env_kind,
            system_header=self.system_header,
            hint_block=self.hint_block,
            few_shot=self.few_shot,
            task_block=self.task_block,
            history=history,
        )

    def without_hint_block(self) -> "PromptAssembly":
        if self.hint_block is None:
            return self
        return PromptAssembly(
            env_kind=self.env_kind,
            system_header=self.system_header,
            hint_block=None,
            few_shot=self.few_shot,
            task_block=self.task_block,
            history=self.history,
        )


def assemble_prompt(assembly: PromptAssembly, scaffold: Scaffold) -> str:
    """Render the full prompt. With no hint block the whole separator block
    is omitted; with no few-shot text (distilled-student evaluation) the
    examples region is omitted too."""
    parts: list[str] = [assembly.system_header, ""]
    if assembly.hint_block:
        parts += [assembly.hint_block, ""]
    if assembly.few_shot:
        parts += [examples_line_for(assembly.env_kind), "", assembly.few_shot, "", SEPARATOR, ""]
    parts += ["Here is the task.", "", assembly.task_block]
    for turn, obs in assembly.history:
        parts.append(render_turn(turn, assembly.env_kind))
        parts.append(obs.text)
    return "\n".join(parts) + "\n"
