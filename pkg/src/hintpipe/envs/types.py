"""Environment interface records shared by MiniHouse and MiniShop.

An episode is a partially observed interaction: the agent sees text
observations, issues text actions, and receives a terminal outcome.  Latent
world state lives in the per-env state classes and is mutated only through
``step``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

HOUSE = "house"
SHOP = "shop"

HOUSE_MAX_STEPS = 50
SHOP_MAX_STEPS = 15

# Category sets with train-split weights used for proportional task generation.
HOUSE_CATEGORY_WEIGHTS = {
    "Cool & Place": 159,
    "Clean & Place": 248,
    "Examine in Light": 104,
    "Heat & Place": 152,
    "Pick & Place": 258,
    "PickTwo & Place": 279,
}
SHOP_CATEGORY_WEIGHTS = {
    "beauty": 262,
    "electronics": 219,
    "fashion": 251,
    "food": 239,
    "furniture": 229,
}

HOUSE_CATEGORIES = tuple(HOUSE_CATEGORY_WEIGHTS)
SHOP_CATEGORIES = tuple(SHOP_CATEGORY_WEIGHTS)


def categories_for(env_kind: str) -> tuple[str, ...]:
    if env_kind == HOUSE:
        return HOUSE_CATEGORIES
    if env_kind == SHOP:
        return SHOP_CATEGORIES
    raise ValueError(f"unknown env_kind: {env_kind!r}")


def category_weights_for(env_kind: str) -> dict[str, int]:
    if env_kind == HOUSE:
        return dict(HOUSE_CATEGORY_WEIGHTS)
    if env_kind == SHOP:
        return dict(SHOP_CATEGORY_WEIGHTS)
    raise ValueError(f"unknown env_kind: {env_kind!r}")


def env_kind_of_category(category: str) -> str:
    """Map a category name back to its environment (the two sets are disjoint)."""
    if category in HOUSE_CATEGORY_WEIGHTS:
        return HOUSE
    if category in SHOP_CATEGORY_WEIGHTS:
        return SHOP
    raise ValueError(f"unknown category: {category!r}")


def max_steps_for(env_kind: str) -> int:
    if env_kind == HOUSE:
        return HOUSE_MAX_STEPS
    if env_kind == SHOP:
        return SHOP_MAX_STEPS
    raise ValueError(f"unknown env_kind: {env_kind!r}")


def stable_seed(*parts: object) -> int:
    """Machine-independent 64-bit seed derived from the given key parts."""
    key = ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


@dataclass(frozen=True)
class TaskSpec:
    """One generated task: the goal an episode tries to reach.

    The same (seed, id) pair always regenerates an identical task and world.
    """

    id: str
    env_kind: str
    category: str
    instruction: str
    seed: int

    def __post_init__(self) -> None:
        if self.category not in categories_for(self.env_kind):
            raise ValueError(
                f"category {self.category!r} not valid for env {self.env_kind!r}"
            )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "env_kind": self.env_kind,
            "category": self.category,
            "instruction": self.instruction,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        return cls(
            id=d["id"],
            env_kind=d["env_kind"],
            category=d["category"],
            instruction=d["instruction"],
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class Observation:
    text: str
    step_index: int

    def __post_init__(self) -> None:
        if self.step_index < 0:
            raise ValueError("step_index must be >= 0")


@dataclass(frozen=True)
class EpisodeOutcome:
    """Terminal result. For shop, success holds exactly when score == 100."""

    success: bool
    score: float
    steps_used: int

    def __post_init__(self) -> None:
        if not 0 <= self.score <= 100:
            raise ValueError("score must lie in [0, 100]")

    def to_dict(self) -> dict:
        return {"success": self.success, "score": self.score, "steps_used": self.steps_used}

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeOutcome":
        return cls(success=bool(d["success"]), score=float(d["score"]), steps_used=int(d["steps_used"]))


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    done: bool
    outcome: EpisodeOutcome | None
    action_valid: bool

    def __post_init__(self) -> None:
        if self.done != (self.outcome is not None):
            raise ValueError("outcome must be present iff done")


class EpisodeFinished(RuntimeError):
    """Raised when stepping an episode that already terminated."""
