"""Tiny byte-level causal transformer with low-rank adapters.

The backbone is deliberately small and randomly initialized from a fixed
seed: the shim certifies adapter mechanics and the training objective, not
language quality. One model token is one UTF-8 byte, and the position
window covers the full 1024-proxy-token budget of upstream datasets
(4 bytes per proxy token).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import torch
from torch import nn

VOCAB_SIZE = 256


@dataclass(frozen=True)
class ModelSpec:
    d_model: int = 64
    n_heads: int = 2
    n_layers: int = 2
    d_ff: int = 256
    max_positions: int = 4096


BACKBONES: dict[str, ModelSpec] = {
    # Default: wide enough that the frozen head's image spans the byte
    # simplex, otherwise adapters hit an artificial loss floor.
    "tiny-256x2": ModelSpec(d_model=256, n_heads=4, n_layers=2, d_ff=512),
    "tiny-64x2": ModelSpec(),
    "tiny-32x1": ModelSpec(d_model=32, n_heads=2, n_layers=1, d_ff=128, max_positions=4096),
}

# Projections that receive adapters: attention plus the MLP.
ADAPTER_TARGETS = ("q_proj", "k_proj", "v_proj", "o_proj", "ff_up", "ff_down")


class Block(nn.Module):
    def __init__(self, spec: ModelSpec) -> None:
        super().__init__()
        self.ln1 = nn.LayerNorm(spec.d_model)
        self.q_proj = nn.Linear(spec.d_model, spec.d_model)
        self.k_proj = nn.Linear(spec.d_model, spec.d_model)
        self.v_proj = nn.Linear(spec.d_model, spec.d_model)
        self.o_proj = nn.Linear(spec.d_model, spec.d_model)
        self.ln2 = nn.LayerNorm(spec.d_model)
        self.ff_up = nn.Linear(spec.d_model, spec.d_ff)
        self.ff_down = nn.Linear(spec.d_ff, spec.d_model)
        self.n_heads = spec.n_heads

    def forward(self, x: torch.Tensor, cache: dict | None = None) -> torch.Tensor:
        batch, seq, dim = x.shape
        h = self.ln1(x)

        def heads(t: torch.Tensor) -> torch.Tensor:
            return t.view(batch, seq, self.n_heads, dim // self.n_heads).transpose(1, 2)

        q, k, v = heads(self.q_proj(h)), heads(self.k_proj(h)), heads(self.v_proj(h))
        if cache is None:
            attn = nn.functional.scaled_dot_product_attention(q, k, v, is_causal=True)
        else:
            # Incremental decode: keys/values accumulate across calls. A
            # single-token query attends to everything cached, so the causal
            # mask is only needed on the prefill pass.
            if "k" in cache:
                k = torch.cat([cache["k"], k], dim=2)
                v = torch.cat([cache["v"], v], dim=2)
            cache["k"], cache["v"] = k, v
            attn = nn.functional.scaled_dot_product_attention(q, k, v, is_causal=seq > 1)
        attn = attn.transpose(1, 2).reshape(batch, seq, dim)
        x = x + self.o_proj(attn)
        h = self.ln2(x)
        return x + self.ff_down(torch.nn.functional.gelu(self.ff_up(h)))


class TinyCausalLM(nn.Module):
    def __init__(self, spec: ModelSpec) -> None:
        super().__init__()
        self.spec = spec
        self.tok_emb = nn.Embedding(VOCAB_SIZE, spec.d_model)
        self.pos_emb = nn.Embedding(spec.max_positions, spec.d_model)
        self.blocks = nn.ModuleList(Block(spec) for _ in range(spec.n_layers))
        self.ln_f = nn.LayerNorm(spec.d_model)
        self.head = nn.Linear(spec.d_model, VOCAB_SIZE)

    def forward(
        self,
        ids: torch.Tensor,
        caches: list[dict] | None = None,
        start_pos: int = 0,
    ) -> torch.Tensor:
        positions = torch.arange(start_pos, start_pos + ids.shape[1], device=ids.device)
        x = self.tok_emb(ids) + self.pos_emb(positions)[None, :, :]
        for i, block in enumerate(self.blocks):
            x = block(x, cache=caches[i] if caches is not None else None)
        return self.head(self.ln_f(x))


class LoRALinear(nn.Module):
    """A frozen linear layer plus a trainable low-rank delta."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float, dropout: float) -> None:
        super().__init__()
        self.base = base
        for parameter in self.base.parameters():
            parameter.requires_grad_(False)
        self.lora_a = nn.Parameter(torch.randn(rank, base.in_features) * 0.02)
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        self.scaling = alpha / rank
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        delta = self.dropout(x) @ self.lora_a.T @ self.lora_b.T
        return self.base(x) + delta * self.scaling


def build_backbone(ref: str, seed: int = 42) -> TinyCausalLM:
    if ref not in BACKBONES:
        raise ValueError(f"unknown backbone ref {ref!r}; choices: {sorted(BACKBONES)}")
    torch.manual_seed(seed)
    model = TinyCausalLM(BACKBONES[ref])
    model.eval()
    return model


def attach_adapters(model: TinyCausalLM, rank: int, alpha: float, dropout: float) -> TinyCausalLM:
    """Freeze every backbone weight, then wrap the attention and MLP
    projections with trainable low-rank deltas."""
    for parameter in model.parameters():
        parameter.requires_grad_(False)
    for block in model.blocks:
        for name in ADAPTER_TARGETS:
            setattr(block, name, LoRALinear(getattr(block, name), rank, alpha, dropout))
    return model


def adapter_parameters(model: TinyCausalLM):
    return [p for p in model.parameters() if p.requires_grad]


def backbone_hash(model: TinyCausalLM) -> str:
    """Digest over every frozen (non-adapter) parameter, name-ordered.
    Wrapping a projection moves it under `.base.`, so names are normalized
    to stay comparable before and after adapters attach."""
    entries = []
    for name, parameter in model.named_parameters():
        if "lora_a" in name or "lora_b" in name:
            continue
        entries.append((name.replace(".base.", "."), parameter))
    digest = hashlib.sha256()
    for name, parameter in sorted(entries):
        digest.update(name.encode("utf-8"))
        digest.update(parameter.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def adapter_state(model: TinyCausalLM) -> dict[str, torch.Tensor]:
    return {
        name: parameter.detach().clone()
        for name, parameter in model.named_parameters()
        if "lora_a" in name or "lora_b" in name
    }


def encode(text: str) -> list[int]:
    return list(text.encode("utf-8"))


def decode(ids: list[int]) -> str:
    return bytes(ids).decode("utf-8", errors="replace")


@torch.no_grad()
def generate(model: TinyCausalLM, prompt_ids: list[int], max_new: int) -> list[int]:
    """Greedy byte generation with a key/value cache, stopping at the second
    newline. The caller guarantees prompt + budget fit the position window."""
    caches: list[dict] = [{} for _ in model.blocks]
    logits = model(torch.tensor([prompt_ids], dtype=torch.long), caches, 0)
    emitted: list[int] = []
    newlines = 0
    position = len(prompt_ids)
    for _ in range(max_new):
        nxt = int(torch.argmax(logits[0, -1]).item())
        emitted.append(nxt)
        if nxt == ord("\n"):
            newlines += 1
            if newlines >= 2:
                break
        logits = model(torch.tensor([[nxt]], dtype=torch.long), caches, position)
        position += 1
    return emitted
