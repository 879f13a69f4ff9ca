"""Dataset loading and the purity gate.

Reads the upstream JSONL verbatim ({text, meta{...}}) and refuses to hand
anything to the trainer until a clean purity report sits next to it.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass


class PurityGateError(RuntimeError):
    """Training refused: the purity manifest is missing or reports leakage."""


@dataclass(frozen=True)
class Example:
    text: str
    label_smoothing: float
    max_seq_len: int
    task_id: str


def default_purity_path(dataset_path: str) -> str:
    return dataset_path.replace(".jsonl", "") + ".purity.json"


def check_purity_gate(dataset_path: str, purity_report_path: str | None) -> None:
    path = purity_report_path or default_purity_path(dataset_path)
    if not os.path.exists(path):
        raise PurityGateError(
            f"no purity report at {path}; run the pipeline verifier before training"
        )
    with open(path, encoding="utf-8") as fh:
        report = json.load(fh)
    violations = report.get("violations", [])
    if violations or not report.get("clean", False):
        raise PurityGateError(
            f"dataset failed purity verification ({len(violations)} violations); refusing to train"
        )


def load_examples(dataset_path: str) -> list[Example]:
    examples: list[Example] = []
    with open(dataset_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            meta = record.get("meta", {})
            examples.append(
                Example(
                    text=record["text"],
                    label_smoothing=float(meta.get("label_smoothing", 0.0)),
                    max_seq_len=int(meta.get("max_seq_len", 1024)),
                    task_id=str(meta.get("task_id", "?")),
                )
            )
    if not examples:
        raise ValueError(f"dataset at {dataset_path} is empty")
    return examples
