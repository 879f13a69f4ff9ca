#!/usr/bin/env python3
"""One-time golden capture: freezes seeded env and prompt renderings into
tests/fixtures/. Rerun only when a deliberate format change is made, and
review the diff by hand."""

import json
from pathlib import Path

from hintpipe.agents import PromptAssembly, assemble_prompt, few_shot_for, header_for, scaffold_for
from hintpipe.envs import generate_tasks, golden_house_actions, reset, step
from hintpipe.hints import Hint, normalize
from hintpipe.retrieval import render_hint_block

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

REFERENCE_HINTS = [
    "Identify and locate the {object} before attempting to move it.",
    "Ensure the {object} is cool before placing it in the {container}.",
    "Ensure the {object} is accessible and not obstructed by other items.",
]


def main() -> None:
    house_task = generate_tasks("house", "train", 1, 42)[0]
    shop_task = generate_tasks("shop", "train", 1, 42)[0]

    _, house_obs = reset(house_task)
    (FIXTURES / "house_reset.txt").write_text(house_obs.text + "\n", encoding="utf-8")
    _, shop_obs = reset(shop_task)
    (FIXTURES / "shop_reset.txt").write_text(shop_obs.text + "\n", encoding="utf-8")

    state, _ = reset(house_task)
    rows = []
    for i, action in enumerate(golden_house_actions(house_task)):
        result = step(state, action)
        rows.append(
            {
                "step": i,
                "action": action,
                "observation": result.observation.text,
                "valid": result.action_valid,
            }
        )
    with open(FIXTURES / "house_replay.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    scaffold = scaffold_for("react", "house")
    base_assembly = PromptAssembly(
        env_kind="house",
        system_header=header_for("house"),
        hint_block=None,
        few_shot=few_shot_for("house", "react"),
        task_block=house_obs.text,
    )
    (FIXTURES / "prompt_house_react_base.txt").write_text(
        assemble_prompt(base_assembly, scaffold), encoding="utf-8"
    )

    hints = [
        Hint(category="Cool & Place", text=normalize(t), source_episode="reference")
        for t in REFERENCE_HINTS
    ]
    rag_assembly = PromptAssembly(
        env_kind="house",
        system_header=header_for("house"),
        hint_block=render_hint_block(hints),
        few_shot=few_shot_for("house", "react"),
        task_block=house_obs.text,
    )
    (FIXTURES / "prompt_house_react_rag.txt").write_text(
        assemble_prompt(rag_assembly, scaffold), encoding="utf-8"
    )

    # A serialized training example from a clean base success (the examine
    # task succeeds without hints).
    from hintpipe.dataset import serialize_trajectory
    from hintpipe.llm.rules import offline_backend
    from hintpipe.rollout import PolicyConfig, run_episode

    policy = PolicyConfig(mode="base", scaffold=scaffold, backend=offline_backend())
    trajectory = next(
        t
        for t in (run_episode(task, policy) for task in generate_tasks("house", "train", 12, 42))
        if t.outcome.success
    )
    example = serialize_trajectory(trajectory, "sft")
    (FIXTURES / "example_sft.txt").write_text(example.text, encoding="utf-8")
    print("fixtures frozen under", FIXTURES)


if __name__ == "__main__":
    main()
