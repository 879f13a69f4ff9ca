"""MiniHouse: a deterministic, seeded household text world.

Six task categories over verb-object commands (go to / take / put / open /
close / clean / heat / cool / use / examine).  Worlds are small (8-16
receptacles, 10-20 objects) but force systematic search: contents are only
revealed on arrival, and closed containers must be opened to be inspected.

Placing an object into a closed container is the canonical injectable
failure: the action is invalid, the step is consumed, and the transcript
records "Nothing happens.".

The live observation vocabulary (receptacle and object names, sentence
shapes) is intentionally disjoint from the fixed few-shot demonstration
assets so that no 40-character run of a demonstration can ever occur in a
generated transcript; the dataset purity scanner depends on this.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .types import (
    HOUSE_MAX_STEPS,
    EpisodeFinished,
    EpisodeOutcome,
    Observation,
    StepResult,
    TaskSpec,
)

OPENABLE_TYPES = ("cupboard", "locker", "chest")
SURFACE_TYPES = ("rack", "sidetable", "workbench", "bench", "stand")
# One of each appliance per world; appliances are containers but their verbs
# work without opening them (matching the transcript style the scaffolds use).
APPLIANCE_TYPES = ("icebox", "oven", "washbasin")

OBJECT_POOL = (
    "bowl", "kettle", "jar", "flask", "teapot", "ladle", "whisk", "sponge",
    "towel", "candle", "notebook", "magazine", "figurine", "coin", "brush",
    "tin", "tray", "goblet", "pitcher", "canister",
)

CATEGORY_FLAG = {"Clean & Place": "clean", "Heat & Place": "hot", "Cool & Place": "cool"}
FLAG_APPLIANCE = {"clean": "washbasin", "hot": "oven", "cool": "icebox"}
FLAG_VERB = {"clean": "clean", "hot": "heat", "cool": "cool"}

NOTHING_HAPPENS = "Nothing happens."

# Fraction of put-style tasks whose target receptacle is a closed container,
# so that the injectable failure has teeth on a seeded pilot suite.
OPENABLE_TARGET_RATE = 0.7


@dataclass
class Receptacle:
    name: str
    type: str
    openable: bool
    is_open: bool
    contents: list[str] = field(default_factory=list)


@dataclass
class HouseObject:
    name: str
    type: str
    flags: set[str] = field(default_factory=set)


@dataclass
class HouseState:
    """Full latent world state; mutated only via :func:`step`."""

    task: TaskSpec
    receptacles: dict[str, Receptacle]
    objects: dict[str, HouseObject]
    order: list[str]                      # room enumeration order
    goal_object_type: str
    goal_target_type: str | None         # None for Examine in Light
    goal_flag: str | None
    goal_count: int
    agent_loc: str | None = None
    inventory: str | None = None
    examine_done: bool = False
    step_count: int = 0
    done: bool = False
    outcome: EpisodeOutcome | None = None

    def to_dict(self) -> dict:
        return {
            "task": self.task.to_dict(),
            "receptacles": {
                n: {
                    "type": r.type,
                    "openable": r.openable,
                    "is_open": r.is_open,
                    "contents": list(r.contents),
                }
                for n, r in self.receptacles.items()
            },
            "objects": {
                n: {"type": o.type, "flags": sorted(o.flags)} for n, o in self.objects.items()
            },
            "order": list(self.order),
            "goal_object_type": self.goal_object_type,
            "goal_target_type": self.goal_target_type,
            "goal_flag": self.goal_flag,
            "goal_count": self.goal_count,
            "agent_loc": self.agent_loc,
            "inventory": self.inventory,
            "examine_done": self.examine_done,
            "step_count": self.step_count,
            "done": self.done,
            "outcome": self.outcome.to_dict() if self.outcome else None,
        }


@dataclass(frozen=True)
class _Plan:
    """Everything the seeded generator decides for one task."""

    receptacle_specs: list[tuple[str, str, bool]]  # (name, type, openable)
    placements: dict[str, str]                     # object name -> receptacle name
    object_types: dict[str, str]
    goal_object_type: str
    goal_target_type: str | None
    goal_flag: str | None
    goal_count: int
    instruction: str


def _build_plan(category: str, task_seed: int) -> _Plan:
    rng = random.Random(task_seed)

    # Receptacles: the three appliances plus a seeded mix of containers and
    # surfaces, 8-16 total (one slot is reserved in case the goal's target
    # type must be appended), enumerated in a seeded order.
    extra_total = rng.randint(5, 12)
    extra_types = []
    for _ in range(extra_total):
        if rng.random() < 0.45:
            extra_types.append(rng.choice(OPENABLE_TYPES))
        else:
            extra_types.append(rng.choice(SURFACE_TYPES))

    type_counts: dict[str, int] = {}
    specs: list[tuple[str, str, bool]] = []
    all_types = list(APPLIANCE_TYPES) + extra_types
    rng.shuffle(all_types)
    for rtype in all_types:
        type_counts[rtype] = type_counts.get(rtype, 0) + 1
        name = f"{rtype} {type_counts[rtype]}"
        specs.append((name, rtype, rtype in OPENABLE_TYPES or rtype in ("icebox", "oven")))

    # Goal shape.
    goal_flag = CATEGORY_FLAG.get(category)
    goal_object_type = rng.choice(OBJECT_POOL)
    goal_count = 2 if category == "PickTwo & Place" else 1

    goal_target_type: str | None
    if category == "Examine in Light":
        goal_target_type = None
        instruction = f"examine the {goal_object_type} under the lamp"
    else:
        if rng.random() < OPENABLE_TARGET_RATE:
            goal_target_type = rng.choice(OPENABLE_TYPES)
        else:
            goal_target_type = rng.choice(SURFACE_TYPES)
        if not any(t == goal_target_type for _, t, _ in specs):
            type_counts[goal_target_type] = type_counts.get(goal_target_type, 0) + 1
            specs.append(
                (
                    f"{goal_target_type} {type_counts[goal_target_type]}",
                    goal_target_type,
                    goal_target_type in OPENABLE_TYPES,
                )
            )
        if category == "PickTwo & Place":
            instruction = f"put two {goal_object_type}s in {goal_target_type}"
        elif goal_flag is not None:
            adjective = {"clean": "clean", "hot": "hot", "cool": "cool"}[goal_flag]
            instruction = f"put a {adjective} {goal_object_type} in {goal_target_type}"
        else:
            instruction = f"put a {goal_object_type} in {goal_target_type}"

    # Objects: goal instances plus distractors, placed anywhere.
    object_types: dict[str, str] = {}
    placements: dict[str, str] = {}
    per_type_count: dict[str, int] = {}
    receptacle_names = [name for name, _, _ in specs]

    def add_object(obj_type: str, receptacle: str) -> str:
        per_type_count[obj_type] = per_type_count.get(obj_type, 0) + 1
        name = f"{obj_type} {per_type_count[obj_type]}"
        object_types[name] = obj_type
        placements[name] = receptacle
        return name

    total_objects = rng.randint(10, 20)
    # For untransformed put goals the object must not start inside the target
    # receptacle type, otherwise the task would be complete at reset.
    if goal_target_type is not None and goal_flag is None:
        goal_spots = [n for n, t, _ in specs if t != goal_target_type]
    else:
        goal_spots = receptacle_names
    for _ in range(goal_count):
        add_object(goal_object_type, rng.choice(goal_spots))
    if category == "Examine in Light":
        surfaces = [n for n, t, _ in specs if t in SURFACE_TYPES or t == "washbasin"]
        add_object("lamp", rng.choice(surfaces))
    while len(object_types) < total_objects:
        distractor = rng.choice([t for t in OBJECT_POOL if t != goal_object_type])
        add_object(distractor, rng.choice(receptacle_names))

    return _Plan(
        receptacle_specs=specs,
        placements=placements,
        object_types=object_types,
        goal_object_type=goal_object_type,
        goal_target_type=goal_target_type,
        goal_flag=goal_flag,
        goal_count=goal_count,
        instruction=instruction,
    )


def instruction_for(category: str, task_seed: int) -> str:
    return _build_plan(category, task_seed).instruction


def reset(task: TaskSpec) -> tuple[HouseState, Observation]:
    plan = _build_plan(task.category, task.seed)
    receptacles = {
        name: Receptacle(name=name, type=rtype, openable=openable, is_open=not openable)
        for name, rtype, openable in plan.receptacle_specs
    }
    objects = {name: HouseObject(name=name, type=otype) for name, otype in plan.object_types.items()}
    for obj_name, rec_name in plan.placements.items():
        receptacles[rec_name].contents.append(obj_name)
    state = HouseState(
        task=task,
        receptacles=receptacles,
        objects=objects,
        order=[name for name, _, _ in plan.receptacle_specs],
        goal_object_type=plan.goal_object_type,
        goal_target_type=plan.goal_target_type,
        goal_flag=plan.goal_flag,
        goal_count=plan.goal_count,
    )
    room = _join_names([f"a {n}" for n in state.order])
    text = (
        f"You are in the middle of a room. Around you, you see {room}.\n"
        f"Your task is to: {task.instruction}."
    )
    return state, Observation(text=text, step_index=0)


def _join_names(parts: list[str]) -> str:
    if not parts:
        return "nothing"
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return f"{parts[0]} and {parts[1]}"
    return ", ".join(parts[:-1]) + f", and {parts[-1]}"


def _contents_text(state: HouseState, rec: Receptacle) -> str:
    return _join_names([f"a {n}" for n in rec.contents])


def step(state: HouseState, action: str) -> StepResult:
    """Apply one text action. Invalid or unparseable actions consume a step
    and observe "Nothing happens."."""
    if state.done:
        raise EpisodeFinished(f"episode for task {state.task.id} already finished")

    text, valid = _apply(state, action.strip())
    state.step_count += 1

    if _goal_satisfied(state):
        state.done = True
        state.outcome = EpisodeOutcome(success=True, score=100.0, steps_used=state.step_count)
    elif state.step_count >= HOUSE_MAX_STEPS:
        state.done = True
        state.outcome = EpisodeOutcome(success=False, score=0.0, steps_used=state.step_count)

    obs = Observation(text=text, step_index=state.step_count)
    return StepResult(observation=obs, done=state.done, outcome=state.outcome, action_valid=valid)


def _apply(state: HouseState, action: str) -> tuple[str, bool]:
    recs = state.receptacles
    objs = state.objects

    if action.startswith("go to ") or action.startswith("goto "):
        name = action.split(" ", 2)[2] if action.startswith("go to ") else action.split(" ", 1)[1]
        rec = recs.get(name)
        if rec is None or state.agent_loc == name:
            return NOTHING_HAPPENS, False
        state.agent_loc = name
        if rec.openable and not rec.is_open:
            return f"The {name} is closed.", True
        if rec.openable:
            return f"The {name} is open. Inside, you see {_contents_text(state, rec)}.", True
        return f"You arrive at the {name}. On it, you see {_contents_text(state, rec)}.", True

    if action.startswith("open "):
        name = action[len("open "):]
        rec = recs.get(name)
        if rec is None or state.agent_loc != name or not rec.openable or rec.is_open:
            return NOTHING_HAPPENS, False
        rec.is_open = True
        return f"You open the {name}. Inside, you see {_contents_text(state, rec)}.", True

    if action.startswith("close "):
        name = action[len("close "):]
        rec = recs.get(name)
        if rec is None or state.agent_loc != name or not rec.openable or not rec.is_open:
            return NOTHING_HAPPENS, False
        rec.is_open = False
        return f"You close the {name}.", True

    if action.startswith("take "):
        rest = action[len("take "):]
        if " from " not in rest:
            return NOTHING_HAPPENS, False
        obj_name, rec_name = rest.split(" from ", 1)
        rec = recs.get(rec_name)
        if (
            rec is None
            or state.agent_loc != rec_name
            or obj_name not in rec.contents
            or (rec.openable and not rec.is_open)
            or state.inventory is not None
        ):
            return NOTHING_HAPPENS, False
        rec.contents.remove(obj_name)
        state.inventory = obj_name
        return f"You pick up the {obj_name} from the {rec_name}.", True

    if action.startswith("put "):
        rest = action[len("put "):]
        rec_name = obj_name = None
        for sep in (" in/on ", " in ", " on "):
            if sep in rest:
                obj_name, rec_name = rest.split(sep, 1)
                break
        rec = recs.get(rec_name) if rec_name else None
        if rec is None or state.agent_loc != rec_name or state.inventory != obj_name:
            return NOTHING_HAPPENS, False
        if rec.openable and not rec.is_open:
            # Canonical injectable failure: placing into a closed container.
            return NOTHING_HAPPENS, False
        rec.contents.append(obj_name)
        state.inventory = None
        return f"You put the {obj_name} in/on the {rec_name}.", True

    for verb, flag in (("clean ", "clean"), ("heat ", "hot"), ("cool ", "cool")):
        if action.startswith(verb):
            rest = action[len(verb):]
            if " with " not in rest:
                return NOTHING_HAPPENS, False
            obj_name, rec_name = rest.split(" with ", 1)
            rec = recs.get(rec_name)
            if (
                rec is None
                or state.agent_loc != rec_name
                or state.inventory != obj_name
                or rec.type != FLAG_APPLIANCE[flag]
            ):
                return NOTHING_HAPPENS, False
            obj = objs[obj_name]
            obj.flags.add(flag)
            if flag == "hot":
                obj.flags.discard("cool")
            elif flag == "cool":
                obj.flags.discard("hot")
            return f"You {verb.strip()} the {obj_name} using the {rec_name}.", True

    if action.startswith("use "):
        obj_name = action[len("use "):]
        obj = objs.get(obj_name)
        if obj is None or obj.type != "lamp":
            return NOTHING_HAPPENS, False
        lamp_loc = _object_location(state, obj_name)
        if lamp_loc is None or state.agent_loc != lamp_loc:
            return NOTHING_HAPPENS, False
        holding = objs.get(state.inventory) if state.inventory else None
        if (
            state.task.category == "Examine in Light"
            and holding is not None
            and holding.type == state.goal_object_type
        ):
            state.examine_done = True
        return f"You switch on the {obj_name}.", True

    if action.startswith("examine "):
        obj_name = action[len("examine "):]
        if state.inventory == obj_name:
            return f"You look closely at the {obj_name}.", True
        loc = _object_location(state, obj_name)
        if loc is None or loc != state.agent_loc:
            return NOTHING_HAPPENS, False
        rec = recs[loc]
        if rec.openable and not rec.is_open:
            return NOTHING_HAPPENS, False
        return f"You look closely at the {obj_name}.", True

    return NOTHING_HAPPENS, False


def _object_location(state: HouseState, obj_name: str) -> str | None:
    for rec in state.receptacles.values():
        if obj_name in rec.contents:
            return rec.name
    return None


def _goal_satisfied(state: HouseState) -> bool:
    if state.task.category == "Examine in Light":
        return state.examine_done
    placed = 0
    for rec in state.receptacles.values():
        if rec.type != state.goal_target_type:
            continue
        for obj_name in rec.contents:
            obj = state.objects[obj_name]
            if obj.type != state.goal_object_type:
                continue
            if state.goal_flag is None or state.goal_flag in obj.flags:
                placed += 1
    return placed >= state.goal_count


def goal_reached(state: HouseState) -> bool:
    """Independent read-only goal probe used by replay checkers."""
    return _goal_satisfied(state)


def golden_house_actions(task: TaskSpec) -> list[str]:
    """A known-good action sequence for ``task``, planned with full world
    knowledge. Every generated MiniHouse task is solvable within the step cap
    by this route."""
    state, _ = reset(task)
    actions: list[str] = []

    def visit(rec_name: str) -> None:
        rec = state.receptacles[rec_name]
        if state.agent_loc != rec_name:
            actions.append(f"go to {rec_name}")
            state.agent_loc = rec_name
        if rec.openable and not rec.is_open:
            actions.append(f"open {rec_name}")
            rec.is_open = True

    def fetch(obj_name: str) -> None:
        loc = _object_location(state, obj_name)
        visit(loc)
        actions.append(f"take {obj_name} from {loc}")
        state.receptacles[loc].contents.remove(obj_name)
        state.inventory = obj_name

    goal_instances = sorted(
        n for n, o in state.objects.items() if o.type == state.goal_object_type
    )[: state.goal_count]

    if state.task.category == "Examine in Light":
        lamp = next(n for n, o in state.objects.items() if o.type == "lamp")
        fetch(goal_instances[0])
        lamp_loc = _object_location(state, lamp)
        visit(lamp_loc)
        actions.append(f"use {lamp}")
        return actions

    target = next(
        r.name for r in state.receptacles.values() if r.type == state.goal_target_type
    )
    for obj_name in goal_instances:
        fetch(obj_name)
        if state.goal_flag is not None:
            appliance = next(
                r.name
                for r in state.receptacles.values()
                if r.type == FLAG_APPLIANCE[state.goal_flag]
            )
            visit(appliance)
            actions.append(f"{FLAG_VERB[state.goal_flag]} {obj_name} with {appliance}")
        visit(target)
        actions.append(f"put {obj_name} in/on {target}")
        state.receptacles[target].contents.append(obj_name)
        state.inventory = None
    return actions
