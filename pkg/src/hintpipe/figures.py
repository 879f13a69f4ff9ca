"""Frontier figure rendering for the CLI report path.

The report library itself only emits CSV; this module turns its rows into
the tokens-vs-performance scatter written alongside the delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .report import MetricsRow, success_or_score

# Marker shapes by training regime: base circle, rag cross, students square
# and diamond.
METHOD_MARKERS = {"base": "o", "rag": "x", "sft_student": "s", "distill_student": "D"}
METHOD_COLORS = {"base": "tab:blue", "rag": "tab:red", "sft_student": "tab:green", "distill_student": "tab:purple"}


def render_frontier(rows: list[MetricsRow], out_path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for row in rows:
        ax.scatter(
            row.tokens_per_episode,
            success_or_score(row),
            marker=METHOD_MARKERS.get(row.method, "o"),
            color=METHOD_COLORS.get(row.method, "gray"),
            s=70,
            label=f"{row.method}/{row.scaffold}",
        )
    ax.set_xlabel("tokens per episode")
    ax.set_ylabel("success rate / score")
    ax.set_title("cost vs performance")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120, metadata={"Software": None})
    plt.close(fig)
