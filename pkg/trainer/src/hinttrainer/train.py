"""Adapter training over frozen tiny backbones.

Hyperparameter defaults mirror the reference configuration (house: rank 64,
alpha 128, dropout 0.10, weight decay 0.01; shop: rank 16, alpha 32, dropout
0.20, weight decay 0.05; LR 2e-4; sequence budget 1024), scaled down where a
desk-size backbone needs it. The schedule shape is fixed: AdamW, linear
decay, 10% warmup, one epoch by default.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import torch

from .data import Example, PurityGateError, check_purity_gate, load_examples
from .loss import smoothed_ce_loss
from .model import (
    TinyCausalLM,
    adapter_parameters,
    adapter_state,
    attach_adapters,
    backbone_hash,
    build_backbone,
    encode,
)

__all__ = ["AdapterConfig", "StudentArtifact", "PurityGateError", "train"]


@dataclass(frozen=True)
class AdapterConfig:
    rank: int = 64
    alpha: float = 128.0
    dropout: float = 0.10
    weight_decay: float = 0.01
    learning_rate: float = 2e-4
    seq_len: int = 1024
    epochs: int = 1
    warmup_fraction: float = 0.1
    label_smoothing_default: float = 0.0
    batch_size: int = 2
    seed: int = 42


HOUSE_DEFAULTS = AdapterConfig()
SHOP_DEFAULTS = AdapterConfig(
    rank=16, alpha=32.0, dropout=0.20, weight_decay=0.05, label_smoothing_default=0.1
)
# Scaled for the in-repo tiny backbone: smaller rank, hotter LR, same shape.
TINY_PILOT = AdapterConfig(rank=16, alpha=32.0, dropout=0.0, learning_rate=3e-3, batch_size=1)


@dataclass
class StudentArtifact:
    backbone_ref: str
    config: AdapterConfig
    adapters: dict[str, torch.Tensor]
    manifest: dict = field(default_factory=dict)

    def build_model(self) -> TinyCausalLM:
        model = build_backbone(self.backbone_ref, seed=self.config.seed)
        attach_adapters(model, self.config.rank, self.config.alpha, self.config.dropout)
        state = model.state_dict()
        state.update(self.adapters)
        model.load_state_dict(state)
        model.eval()
        return model

    def save(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        torch.save(self.adapters, os.path.join(out_dir, "adapters.pt"))
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "backbone_ref": self.backbone_ref,
                    "config": asdict(self.config),
                    **self.manifest,
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")

    @classmethod
    def load(cls, out_dir: str) -> "StudentArtifact":
        with open(os.path.join(out_dir, "manifest.json"), encoding="utf-8") as fh:
            manifest = json.load(fh)
        config = AdapterConfig(**manifest.pop("config"))
        backbone_ref = manifest.pop("backbone_ref")
        adapters = torch.load(os.path.join(out_dir, "adapters.pt"), weights_only=True)
        return cls(backbone_ref=backbone_ref, config=config, adapters=adapters, manifest=manifest)


def _sequences(examples: list[Example], config: AdapterConfig) -> list[tuple[list[int], float]]:
    sequences = []
    for example in examples:
        ids = encode(example.text)
        # Upstream drops over-budget episodes; the byte window is 4x the
        # proxy-token budget, so anything longer indicates a foreign file.
        if len(ids) > 4 * config.seq_len:
            raise ValueError(f"example {example.task_id} exceeds the byte window")
        if len(ids) >= 2:
            sequences.append((ids, example.label_smoothing))
    return sequences


def _batch_loss(model: TinyCausalLM, batch: list[tuple[list[int], float]]) -> torch.Tensor:
    """Mean of per-example smoothed losses; each example applies its own
    label-smoothing eps from the dataset metadata."""
    losses = []
    for ids, eps in batch:
        tensor = torch.tensor([ids], dtype=torch.long)
        logits = model(tensor[:, :-1])[0]
        targets = tensor[0, 1:]
        losses.append(smoothed_ce_loss(logits, targets, eps))
    return torch.stack(losses).mean()


@torch.no_grad()
def _mean_loss(model: TinyCausalLM, sequences: list[tuple[list[int], float]]) -> float:
    model.eval()
    total = 0.0
    for ids, eps in sequences:
        tensor = torch.tensor([ids], dtype=torch.long)
        logits = model(tensor[:, :-1])[0]
        total += float(smoothed_ce_loss(logits, tensor[0, 1:], eps))
    return total / len(sequences)


def _dataset_hash(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def train(
    dataset_path: str,
    adapter_cfg: AdapterConfig,
    tiny_backbone_ref: str = "tiny-256x2",
    purity_report_path: str | None = None,
    out_dir: str | None = None,
) -> StudentArtifact:
    """Train adapters on one dataset, leaving the backbone untouched.

    Refuses to run without a clean purity report. Deterministic under a
    fixed config seed; the manifest records the config, dataset hash, the
    backbone digest (identical before and after), and the loss trajectory.
    """
    check_purity_gate(dataset_path, purity_report_path)
    examples = load_examples(dataset_path)
    sequences = _sequences(examples, adapter_cfg)

    torch.manual_seed(adapter_cfg.seed)
    model = build_backbone(tiny_backbone_ref, seed=adapter_cfg.seed)
    hash_before = backbone_hash(model)
    attach_adapters(model, adapter_cfg.rank, adapter_cfg.alpha, adapter_cfg.dropout)

    initial_loss = _mean_loss(model, sequences)

    parameters = adapter_parameters(model)
    optimizer = torch.optim.AdamW(
        parameters, lr=adapter_cfg.learning_rate, weight_decay=adapter_cfg.weight_decay
    )
    batches_per_epoch = max(1, (len(sequences) + adapter_cfg.batch_size - 1) // adapter_cfg.batch_size)
    total_steps = batches_per_epoch * adapter_cfg.epochs
    warmup_steps = max(1, int(total_steps * adapter_cfg.warmup_fraction))

    def lr_lambda(step: int) -> float:
        if step < warmup_steps:
            return (step + 1) / warmup_steps
        remaining = total_steps - warmup_steps
        return max(0.0, (total_steps - step) / max(1, remaining))

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_lambda)

    model.train()
    for _ in range(adapter_cfg.epochs):
        for start in range(0, len(sequences), adapter_cfg.batch_size):
            batch = sequences[start : start + adapter_cfg.batch_size]
            optimizer.zero_grad()
            loss = _batch_loss(model, batch)
            loss.backward()
            optimizer.step()
            scheduler.step()

    final_loss = _mean_loss(model, sequences)
    hash_after = backbone_hash(model)
    if hash_after != hash_before:
        raise RuntimeError("backbone parameters changed during adapter training")
    if not final_loss < initial_loss:
        raise RuntimeError(
            f"training did not reduce the loss ({initial_loss:.4f} -> {final_loss:.4f})"
        )

    artifact = StudentArtifact(
        backbone_ref=tiny_backbone_ref,
        config=adapter_cfg,
        adapters=adapter_state(model),
        manifest={
            "dataset_hash": _dataset_hash(dataset_path),
            "examples": len(sequences),
            "initial_loss": round(initial_loss, 6),
            "final_loss": round(final_loss, 6),
            "backbone_hash": hash_before,
        },
    )
    if out_dir is not None:
        artifact.save(out_dir)
    return artifact
