"""Kind-dispatching facade over the two environments."""

from __future__ import annotations

from . import house, shop
from .types import HOUSE, SHOP, Observation, StepResult, TaskSpec


def reset(task: TaskSpec) -> tuple[object, Observation]:
    if task.env_kind == HOUSE:
        return house.reset(task)
    if task.env_kind == SHOP:
        return shop.reset(task)
    raise ValueError(f"unknown env_kind: {task.env_kind!r}")


def step(state: object, action: str) -> StepResult:
    if isinstance(state, house.HouseState):
        return house.step(state, action)
    if isinstance(state, shop.ShopState):
        return shop.step(state, action)
    raise TypeError(f"unknown state type: {type(state)!r}")
