from .types import (
    HOUSE_CATEGORIES,
    HOUSE_MAX_STEPS,
    SHOP_CATEGORIES,
    SHOP_MAX_STEPS,
    EpisodeOutcome,
    Observation,
    StepResult,
    TaskSpec,
    categories_for,
    env_kind_of_category,
    max_steps_for,
)
from .tasks import generate_tasks
from .house import HouseState, golden_house_actions
from .shop import ShopState, shop_score
from .core import reset, step

__all__ = [
    "HOUSE_CATEGORIES",
    "SHOP_CATEGORIES",
    "HOUSE_MAX_STEPS",
    "SHOP_MAX_STEPS",
    "TaskSpec",
    "Observation",
    "StepResult",
    "EpisodeOutcome",
    "HouseState",
    "ShopState",
    "categories_for",
    "env_kind_of_category",
    "max_steps_for",
    "generate_tasks",
    "reset",
    "step",
    "shop_score",
    "golden_house_actions",
]
