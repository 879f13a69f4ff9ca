"""Seeded task generation with category proportions matching the train-split mix."""

from __future__ import annotations

from . import house, shop
from .types import HOUSE, SHOP, TaskSpec, category_weights_for, stable_seed


def category_sequence(weights: dict[str, int], count: int) -> list[str]:
    """Deficit-balanced weighted round-robin.

    At each position the category furthest behind its exact proportional
    share is emitted (ties broken by table order). The stream is fixed, so
    the category at index i never depends on how many tasks were requested,
    and every prefix keeps each category within one task of its share.
    """
    order = list(weights)
    total = sum(weights.values())
    running = {c: 0 for c in order}
    sequence: list[str] = []
    for i in range(1, count + 1):
        best = max(order, key=lambda c: (i * weights[c] / total - running[c], -order.index(c)))
        running[best] += 1
        sequence.append(best)
    return sequence


def generate_tasks(env_kind: str, split: str, count: int, seed: int) -> list[TaskSpec]:
    """Generate ``count`` deterministic tasks for one split.

    Categories follow the deficit-balanced round-robin over the train-split
    distribution; train and test ids never collide because the split name is
    part of the id and of the per-task seed, and the same (seed, id) pair
    always regenerates an identical task regardless of count.
    """
    if split not in ("train", "test"):
        raise ValueError(f"unknown split: {split!r}")
    if count < 0:
        raise ValueError("count must be >= 0")
    weights = category_weights_for(env_kind)  # raises on unknown env_kind

    tasks: list[TaskSpec] = []
    for index, category in enumerate(category_sequence(weights, count)):
        task_seed = stable_seed(env_kind, split, seed, index)
        tasks.append(
            TaskSpec(
                id=f"{env_kind}-{split}-s{seed}-{index:04d}",
                env_kind=env_kind,
                category=category,
                instruction=_instruction_for(env_kind, category, task_seed),
                seed=task_seed,
            )
        )
    return tasks


def _instruction_for(env_kind: str, category: str, task_seed: int) -> str:
    if env_kind == HOUSE:
        return house.instruction_for(category, task_seed)
    if env_kind == SHOP:
        return shop.instruction_for(category, task_seed)
    raise ValueError(f"unknown env_kind: {env_kind!r}")
