"""Effectiveness/efficiency aggregation: per-method rows, the cost-accuracy
frontier export, and the retrieval-depth sweep."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .envs.types import SHOP, TaskSpec
from .hints import HintBank
from .rollout import PolicyConfig, Trajectory, run_split

METHODS = ("base", "rag", "sft_student", "distill_student")

FRONTIER_HEADER = "method,scaffold,tokens_per_episode,success_or_score"


@dataclass(frozen=True)
class MetricsRow:
    method: str
    scaffold: str
    env_kind: str
    success_rate: float          # fraction over all episodes, failures included
    mean_score: float | None     # shop only; None for house
    tokens_per_episode: float
    steps_per_episode: float
    episode_count: int

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "scaffold": self.scaffold,
            "env_kind": self.env_kind,
            "success_rate": self.success_rate,
            "mean_score": self.mean_score,
            "tokens_per_episode": self.tokens_per_episode,
            "steps_per_episode": self.steps_per_episode,
            "episode_count": self.episode_count,
        }


def aggregate(trajectories: list[Trajectory], method_label: str) -> MetricsRow:
    """Arithmetic means over all episodes, failures included."""
    if method_label not in METHODS:
        raise ValueError(f"unknown method label: {method_label!r}")
    if not trajectories:
        raise ValueError("cannot aggregate an empty trajectory list")
    count = len(trajectories)
    env_kinds = {t.task.env_kind for t in trajectories}
    env_kind = env_kinds.pop() if len(env_kinds) == 1 else "mixed"
    scaffolds = {t.scaffold_kind for t in trajectories}
    scaffold = scaffolds.pop() if len(scaffolds) == 1 else "mixed"
    return MetricsRow(
        method=method_label,
        scaffold=scaffold,
        env_kind=env_kind,
        success_rate=sum(t.outcome.success for t in trajectories) / count,
        mean_score=(
            sum(t.outcome.score for t in trajectories) / count if env_kind == SHOP else None
        ),
        tokens_per_episode=sum(t.ledger.total for t in trajectories) / count,
        steps_per_episode=sum(t.outcome.steps_used for t in trajectories) / count,
        episode_count=count,
    )


def success_or_score(row: MetricsRow) -> float:
    """Frontier y-value: success percentage for house, mean score for shop.
    Partial shop credit never leaks into success_rate."""
    if row.env_kind == SHOP and row.mean_score is not None:
        return row.mean_score
    return 100.0 * row.success_rate


def export_frontier(rows: list[MetricsRow], out_path: str) -> None:
    """Deterministic CSV: one line per (method, scaffold) row."""
    lines = [FRONTIER_HEADER]
    for row in rows:
        lines.append(
            f"{row.method},{row.scaffold},"
            f"{row.tokens_per_episode:.4f},{success_or_score(row):.4f}"
        )
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def render_table(rows: list[MetricsRow]) -> str:
    """Terminal table in the canonical column order."""
    header = ("Environment", "Method", "Tokens/Episode", "Steps/Episode", "Success/Score")
    body = [
        (
            row.env_kind,
            row.method,
            f"{row.tokens_per_episode:.1f}",
            f"{row.steps_per_episode:.2f}",
            f"{success_or_score(row):.2f}",
        )
        for row in rows
    ]
    widths = [max(len(header[i]), *(len(r[i]) for r in body)) if body else len(header[i]) for i in range(5)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
        "  ".join("-" * w for w in widths),
    ]
    for r in body:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(5)))
    return "\n".join(lines)


def k_sweep(
    tasks: list[TaskSpec],
    ks: list[int],
    policy: PolicyConfig,
    bank: HintBank,
    parallelism: int = 1,
) -> list[tuple[int, MetricsRow]]:
    """Evaluate retrieval depth: one rag batch and one MetricsRow per k."""
    rows = []
    for k in ks:
        k_policy = replace(policy, mode="rag", k=k)
        trajectories = run_split(tasks, k_policy, bank=bank, parallelism=parallelism)
        rows.append((k, aggregate(trajectories, "rag")))
    return rows
