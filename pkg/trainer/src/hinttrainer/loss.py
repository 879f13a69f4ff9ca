"""Full-sequence next-token cross-entropy with token-level label smoothing."""

from __future__ import annotations

import torch


def smoothed_ce_loss(logit_rows: torch.Tensor, target_ids: torch.Tensor, eps: float) -> torch.Tensor:
    """Mean over positions of -sum_v q(v) log softmax(logits)_v, with the
    smoothed target q = (1 - eps) * onehot(target) + eps / V uniform mass.

    One logit row per predicted token; eps comes from the example metadata.
    """
    if logit_rows.ndim != 2 or target_ids.ndim != 1:
        raise ValueError("expected logits of shape (N, V) and targets of shape (N,)")
    if logit_rows.shape[0] != target_ids.shape[0]:
        raise ValueError(
            f"shape mismatch: {logit_rows.shape[0]} logit rows vs {target_ids.shape[0]} targets"
        )
    log_probs = logit_rows - torch.logsumexp(logit_rows, dim=-1, keepdim=True)
    nll = -log_probs.gather(1, target_ids.unsqueeze(1)).squeeze(1)
    uniform = -log_probs.mean(dim=-1)
    return ((1.0 - eps) * nll + eps * uniform).mean()
