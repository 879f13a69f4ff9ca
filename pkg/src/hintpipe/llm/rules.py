"""Deterministic rule tables backing the offline diagnostic backend.

The agent-turn rule is a transcript-reading solver for both environments.
It carries one injectable flaw: it never opens a closed container before
placing an object inside (house), and it searches lazily and skips option
selection (shop).  When the prompt's hint block contains the matching
corrective hint, the flaw is repaired.  This makes retrieval quality
mechanically observable offline: base rollouts fail in diagnosable ways and
hinted rollouts recover.

The hint-extraction rule maps those failure signatures back to the
corrective hints, closing the loop without any model in the loop.
"""

from __future__ import annotations

import json
import re

from ..envs.house import FLAG_APPLIANCE, FLAG_VERB
from ..envs.shop import CATEGORY_CONFIG
from .backends import RuleBasedBackend

TASK_MARKER = "\nHere is the task.\n"

OPEN_CONTAINER_HINT = (
    "Ensure the {container} is open before attempting to place the {object} inside."
)
SEARCH_PATTERN_HINT = (
    "Use a systematic search pattern to avoid missing {object} in {location}."
)
SEARCH_TERMS_HINT = (
    "Ensure search terms include the {size}, {color}, and {attribute} requested before searching."
)
SELECT_OPTIONS_HINT = (
    "Select every required {attribute} option on the {item} page before buying."
)
PRICE_CHECK_HINT = (
    "Verify the {item} price stays under the stated limit before buying."
)

_NAME_RE = re.compile(r"a ([a-z]+ \d+)")
_CONTENTS_RE = re.compile(r"you see (.+)\.$")
_PUT_FAIL_RE = re.compile(r"- put .+? in/on (.+?) → Nothing happens\.")

# Synonyms beyond the primary keyword table, so the classify fallback path
# has deterministic answers for queries the table misses.
CLASSIFY_EXTRA = {
    "timepiece": "fashion",
    "recliner": "furniture",
    "blender": "electronics",
    "perfume": "beauty",
    "espresso": "food",
}


def offline_backend() -> RuleBasedBackend:
    """The fully offline backend used by tests and the pilot pipeline."""
    return RuleBasedBackend(
        rules={
            "agent_turn": agent_turn_rule,
            "hint_extraction": hint_extraction_rule,
            "rerank": rerank_rule,
            "classify": classify_rule,
        }
    )


# ---------------------------------------------------------------------------
# agent turns
# ---------------------------------------------------------------------------

def _hint_bullets(preamble: str) -> list[str]:
    """Bullet texts of the injected hint block, if one is present. Only this
    region may toggle solver behavior; few-shot text must never."""
    if "Here are some hints:" not in preamble:
        return []
    section = preamble.split("Here are some hints:", 1)[1]
    section = section.split("============", 1)[0]
    return [ln[2:].strip() for ln in section.splitlines() if ln.startswith("- ")]


def agent_turn_rule(prompt: str) -> str:
    if TASK_MARKER not in prompt:
        return "> look"
    preamble, live = prompt.split(TASK_MARKER, 1)
    bullets = _hint_bullets(preamble)
    hinted_open = any("{container}" in b and "open" in b for b in bullets)
    hinted_search = any("search terms" in b for b in bullets)
    hinted_options = any("option" in b and "buying" in b for b in bullets)
    if prompt.startswith("Interact with a household"):
        emits_state = "> state: " in preamble
        emits_thought = "> think: " in preamble or emits_state
        return _house_turn(live, hinted_open, emits_state, emits_thought)
    emits_state = "\nState: " in preamble or preamble.startswith("State: ")
    return _shop_turn(live, hinted_search, hinted_options, emits_state)


def _split_live(live: str, agent_prefixes: tuple[str, ...]) -> tuple[list[str], list[tuple[str, list[str]]]]:
    """Split the live region into the task block and (action, obs-lines) pairs."""
    lines = [ln for ln in live.strip("\n").split("\n")]
    task_block: list[str] = []
    pairs: list[tuple[str, list[str]]] = []
    current_action: str | None = None
    current_obs: list[str] = []

    def is_agent(line: str) -> bool:
        return any(line.startswith(p) for p in agent_prefixes)

    for line in lines:
        if is_agent(line):
            stripped = _strip_agent_prefix(line)
            if stripped is None:
                continue  # state or thought line within the current turn
            if current_action is not None:
                pairs.append((current_action, current_obs))
            current_action = stripped
            current_obs = []
        elif current_action is None:
            task_block.append(line)
        else:
            current_obs.append(line)
    if current_action is not None:
        pairs.append((current_action, current_obs))
    return task_block, pairs


def _strip_agent_prefix(line: str) -> str | None:
    if line.startswith("> state: ") or line.startswith("> think: "):
        return None
    if line.startswith("State: ") or line.startswith("Action: think["):
        return None
    if line.startswith("> "):
        return line[2:]
    if line.startswith("Action: "):
        return line[len("Action: "):]
    return None


# -- house ------------------------------------------------------------------

class _HouseSim:
    """Belief state reconstructed from the transcript alone."""

    def __init__(self, task_block: list[str]) -> None:
        room_line = task_block[0]
        task_line = next(ln for ln in task_block if ln.startswith("Your task is to: "))
        self.room: list[str] = _NAME_RE.findall(room_line)
        self.instruction = task_line[len("Your task is to: "):].rstrip(".")
        self.location: str | None = None
        self.holding: str | None = None
        self.visited: set[str] = set()
        self.opened: set[str] = set()
        self.closed_now: dict[str, bool] = {}
        self.contents: dict[str, list[str]] = {}
        self.taken: set[str] = set()
        self.placed: set[str] = set()
        self.flags: set[str] = set()
        self.last_action: str = ""
        self.last_obs: str = ""

        goal = self.instruction
        self.goal_flag: str | None = None
        self.goal_count = 1
        self.target_type: str | None = None
        if goal.startswith("examine the "):
            self.goal_type = goal[len("examine the "):].split(" under")[0]
        elif goal.startswith("put two "):
            rest = goal[len("put two "):]
            obj_plural, self.target_type = rest.split(" in ", 1)
            self.goal_type = obj_plural[:-1]  # drop plural s
            self.goal_count = 2
        else:
            rest = goal[len("put a "):]
            first, remainder = rest.split(" ", 1)
            if first in ("clean", "hot", "cool"):
                self.goal_flag = {"clean": "clean", "hot": "hot", "cool": "cool"}[first]
                obj, self.target_type = remainder.split(" in ", 1)
            else:
                obj, self.target_type = rest.split(" in ", 1)
            self.goal_type = obj

    def apply(self, action: str, obs: str) -> None:
        self.last_action, self.last_obs = action, obs
        if obs == "Nothing happens.":
            return
        if action.startswith("go to "):
            name = action[len("go to "):]
            self.location = name
            self.visited.add(name)
            self.closed_now[name] = obs == f"The {name} is closed."
            self._record_contents(name, obs)
        elif action.startswith("open "):
            name = action[len("open "):]
            self.closed_now[name] = False
            self.opened.add(name)
            self._record_contents(name, obs)
        elif action.startswith("close "):
            name = action[len("close "):]
            self.closed_now[name] = True
        elif action.startswith("take "):
            obj = action[len("take "):].split(" from ")[0]
            self.holding = obj
            self.taken.add(obj)
            here = self.contents.get(self.location, [])
            if obj in here:
                here.remove(obj)
        elif action.startswith("put "):
            if self.holding is not None:
                self.placed.add(self.holding)
            self.holding = None
        elif action.split(" ", 1)[0] in ("clean", "heat", "cool"):
            verb = action.split(" ", 1)[0]
            self.flags.add({"clean": "clean", "heat": "hot", "cool": "cool"}[verb])

    def _record_contents(self, name: str, obs: str) -> None:
        m = _CONTENTS_RE.search(obs)
        if m:
            self.contents[name] = _NAME_RE.findall(m.group(0))
        elif "you see nothing" in obs:
            self.contents[name] = []

    # -- queries ---------------------------------------------------------

    def instance_of_type(self, rtype: str) -> str | None:
        for name in self.room:
            if name.rsplit(" ", 1)[0] == rtype:
                return name
        return None

    def visible_goal_instance(self) -> str | None:
        if self.location is None or self.closed_now.get(self.location, False):
            return None
        for obj in self.contents.get(self.location, []):
            if obj.rsplit(" ", 1)[0] == self.goal_type and obj not in self.taken:
                return obj
        return None

    def known_goal_location(self) -> str | None:
        for name, objs in self.contents.items():
            for obj in objs:
                if obj.rsplit(" ", 1)[0] == self.goal_type and obj not in self.taken:
                    return name
        return None

    def lamp_location(self) -> tuple[str, str] | None:
        for name, objs in self.contents.items():
            for obj in objs:
                if obj.rsplit(" ", 1)[0] == "lamp":
                    return name, obj
        return None

    def next_unvisited(self) -> str | None:
        for name in self.room:
            if name not in self.visited:
                return name
        return None


def _house_turn(live: str, hinted_open: bool, emits_state: bool, emits_thought: bool) -> str:
    task_block, pairs = _split_live(live, ("> ", "State: ", "Action: "))
    sim = _HouseSim(task_block)
    for action, obs_lines in pairs:
        sim.apply(action, "\n".join(obs_lines))

    action, thought = _house_decide(sim, hinted_open)
    lines: list[str] = []
    if emits_state:
        lines.append(
            f"> state: at: {sim.location or 'start of the room'}; "
            f"holding: {sim.holding or 'nothing'}"
        )
    if emits_thought and thought:
        lines.append(f"> think: {thought}")
    lines.append(f"> {action}")
    return "\n".join(lines)


def _house_decide(sim: _HouseSim, hinted_open: bool) -> tuple[str, str | None]:
    first_turn = not sim.last_action
    opener = None
    if first_turn:
        if sim.target_type:
            opener = (
                f"I should track down a {sim.goal_type}, get it ready, "
                f"then move it to the {sim.target_type}."
            )
        else:
            opener = f"I should track down the {sim.goal_type} and light it up with the lamp."

    # Tidy habit: close a container we opened once it has nothing left to
    # give. Never close the placement target we just opened while carrying
    # the prepared object: that open was for the put, not for inspection.
    if sim.last_action.startswith("open ") and sim.last_obs != "Nothing happens.":
        name = sim.last_action[len("open "):]
        ready_to_place = (
            sim.holding is not None
            and sim.target_type is not None
            and (sim.goal_flag is None or sim.goal_flag in sim.flags)
            and name == sim.instance_of_type(sim.target_type)
        )
        if not ready_to_place and sim.visible_goal_instance() is None:
            return f"close {name}", opener
    if (
        sim.last_action.startswith("take ")
        and sim.last_obs.startswith("You pick up")
        and sim.location in sim.opened
        and not sim.closed_now.get(sim.location, True)
    ):
        return f"close {sim.location}", None

    if sim.holding is not None:
        held = sim.holding
        if sim.goal_flag is not None and sim.goal_flag not in sim.flags:
            appliance = sim.instance_of_type(FLAG_APPLIANCE[sim.goal_flag])
            if sim.location == appliance:
                verb = FLAG_VERB[sim.goal_flag]
                return f"{verb} {held} with {appliance}", f"Getting the {held} {sim.goal_flag} here."
            return f"go to {appliance}", None
        if sim.target_type is None:  # Examine in Light
            lamp = sim.lamp_location()
            if lamp is not None:
                lamp_loc, lamp_name = lamp
                if sim.location == lamp_loc:
                    return f"use {lamp_name}", f"Switching on the {lamp_name} to inspect the {held}."
                return f"go to {lamp_loc}", None
        else:
            target = sim.instance_of_type(sim.target_type)
            if sim.location == target:
                if sim.closed_now.get(target, False) and hinted_open:
                    return f"open {target}", None
                return f"put {held} in/on {target}", f"Dropping off the {held} here."
            return f"go to {target}", None

    # Not holding: take what is visible, chase what is known, else search on.
    visible = sim.visible_goal_instance()
    if visible is not None:
        return f"take {visible} from {sim.location}", f"Found the {visible}; picking it up."
    known = sim.known_goal_location()
    if known is not None:
        if known != sim.location:
            return f"go to {known}", None
        if sim.closed_now.get(known, False):
            # The goal is behind this lid; reopen even if already inspected.
            return f"open {known}", None
    if (
        sim.location is not None
        and sim.closed_now.get(sim.location, False)
        and sim.location not in sim.opened
    ):
        return f"open {sim.location}", None
    nxt = sim.next_unvisited()
    if nxt is not None:
        return f"go to {nxt}", opener
    return f"examine {sim.goal_type} 1", None  # exhausted; burn a step


# -- shop ---------------------------------------------------------------------

class _ShopSim:
    def __init__(self, task_block: list[str]) -> None:
        instr_line = next(ln for ln in task_block if ln.startswith("Instruction: "))
        self.instruction = instr_line[len("Instruction: "):]
        self.page = "search"
        self.results: list[str] = []
        self.option_rows: list[tuple[str, list[str]]] = []
        self.selections: list[str] = []

    def apply(self, action: str, obs_lines: list[str]) -> None:
        obs = "\n".join(obs_lines)
        if obs.startswith("Invalid action"):
            return
        if action.startswith("search["):
            self.page = "results"
            self.results = [
                ln[1:-1]
                for ln in obs_lines
                if ln.startswith("[") and ln.endswith("]") and ln not in ("[Back to Search]",)
            ]
        elif action == "click[Back to Search]":
            self.page = "search"
            self.results = []
        elif action == "click[Buy Now]":
            self.page = "done"
        elif action.startswith("click["):
            clicked = action[len("click["):-1]
            if f"You have selected {clicked}." in obs:
                self.selections.append(clicked)
            elif "[Buy Now]" in obs:
                self.page = "item"
                self.option_rows = []
                for ln in obs_lines:
                    m = re.match(r"^([a-z]+): (\[.*\])$", ln)
                    if m:
                        values = re.findall(r"\[([^\[\]]+)\]", m.group(2))
                        self.option_rows.append((m.group(1), values))

    def goal_phrase(self) -> str:
        phrase = self.instruction.split(", and price", 1)[0]
        if phrase.startswith("i would like a "):
            phrase = phrase[len("i would like a "):]
        return phrase


def _shop_turn(live: str, hinted_search: bool, hinted_options: bool, emits_state: bool) -> str:
    task_block, pairs = _split_live(live, ("State: ", "Action: ", "> "))
    sim = _ShopSim(task_block)
    for action, obs_lines in pairs:
        sim.apply(action, obs_lines)

    action = _shop_decide(sim, hinted_search, hinted_options)
    lines = []
    if emits_state:
        selected = ", ".join(sim.selections) if sim.selections else "none"
        lines.append(f"State: page: {sim.page}; selected: {selected}")
    lines.append(f"Action: {action}")
    return "\n".join(lines)


def _noun_words(phrase: str) -> list[str]:
    nouns: set[str] = set()
    for config in CATEGORY_CONFIG.values():
        for noun in config["nouns"]:
            nouns.update(noun.split())
    return [w for w in phrase.split() if w in nouns]


def _phrase_requests(phrase: str, value: str) -> bool:
    """Token-level containment: the value's words must appear contiguously in
    the phrase ("2 ounce" must not match inside "12 ounce")."""
    phrase_tokens = phrase.split()
    value_tokens = value.split()
    n = len(value_tokens)
    return any(phrase_tokens[i : i + n] == value_tokens for i in range(len(phrase_tokens) - n + 1))


def _shop_decide(sim: _ShopSim, hinted_search: bool, hinted_options: bool) -> str:
    phrase = sim.goal_phrase()
    if sim.page == "search":
        if hinted_search:
            return f"search[{phrase}]"
        lazy = " ".join(_noun_words(phrase)) or phrase.split()[-1]
        return f"search[{lazy}]"
    if sim.page == "results":
        if sim.results:
            return f"click[{sim.results[0]}]"
        return "click[Back to Search]"
    if sim.page == "item":
        if hinted_options:
            for _, values in sim.option_rows:
                for value in values:
                    if value not in sim.selections and _phrase_requests(phrase, value):
                        return f"click[{value}]"
        return "click[Buy Now]"
    return "click[Back to Search]"


# ---------------------------------------------------------------------------
# hint extraction
# ---------------------------------------------------------------------------

def hint_extraction_rule(prompt: str) -> str:
    """Map the failure trajectory embedded in the extraction prompt to the
    corrective hints for its signature."""
    household = prompt.startswith("You are diagnosing why a household agent")
    body = prompt.split("=======")
    trajectory = body[1] if len(body) > 1 else prompt

    hints: list[str] = []
    if household:
        for match in _PUT_FAIL_RE.finditer(trajectory):
            container = match.group(1)
            if f"The {container} is closed." in trajectory:
                hints.append(OPEN_CONTAINER_HINT)
                break
        if not hints:
            hints.append(SEARCH_PATTERN_HINT)
        key = "env_type"
        tag = re.search(r"Environment type: (.+)", prompt).group(1)
    else:
        searches = re.findall(r"- search\[([^\]]*)\]", trajectory)
        if searches and len(searches[0].split()) <= 3:
            hints.append(SEARCH_TERMS_HINT)
        if "- click[Buy Now]" in trajectory and "You have selected" not in trajectory:
            hints.append(SELECT_OPTIONS_HINT)
        if not hints:
            hints.append(PRICE_CHECK_HINT)
        key = "category"
        tag = re.search(r"Item category: (.+)", prompt).group(1)

    return json.dumps({"hints": [{key: tag, "text": text} for text in hints]})


# ---------------------------------------------------------------------------
# re-ranking and classification
# ---------------------------------------------------------------------------

def _words(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9][a-z0-9\-]*", text.lower()))


def rerank_rule(prompt: str) -> str:
    k_match = re.search(r"Choose up to (\d+) DISTINCT", prompt)
    k = int(k_match.group(1)) if k_match else 3
    query_match = re.search(r"===== Task & state =====\n(.*?)\n\n=====", prompt, re.DOTALL)
    query_words = _words(query_match.group(1)) if query_match else set()
    candidates = re.findall(r"^(\d+)\) (.+)$", prompt, re.MULTILINE)
    scored = [
        (len(_words(text) & query_words), int(idx)) for idx, text in candidates
    ]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return json.dumps({"answer": [idx for _, idx in scored[:k]]})


def classify_rule(prompt: str) -> str:
    task_match = re.search(r"Task: (.+)", prompt)
    text = task_match.group(1) if task_match else prompt
    words = _words(text)
    # Local import: retrieval owns the primary keyword table.
    from ..retrieval import SHOP_KEYWORDS

    best, best_score = "fashion", 0
    for category, keywords in SHOP_KEYWORDS.items():
        score = len(words & set(keywords))
        if score > best_score:
            best, best_score = category, score
    if best_score == 0:
        for word, category in CLASSIFY_EXTRA.items():
            if word in words:
                return category
    return best
