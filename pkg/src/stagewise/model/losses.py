"""Pretext loss functions."""

from __future__ import annotations

import torch
import torch.nn.functional as F


def nt_xent(embeddings: torch.Tensor, temperature: float) -> torch.Tensor:
    """Normalized-temperature cross entropy over cosine similarities.

    Rows 2k and 2k+1 must be a positive pair. Each of the 2N anchors
    classifies its partner against the other 2N-2 rows (self-similarity
    excluded); the result is the mean over all anchors. Scale-invariant in
    the embeddings and differentiable.
    """
    if embeddings.ndim != 2:
        raise ValueError(f"expected a 2N x d embedding matrix, got shape {tuple(embeddings.shape)}")
    rows = embeddings.shape[0]
    if rows % 2 != 0:
        raise ValueError(f"embedding rows must pair up, got {rows}")
    n_pairs = rows // 2
    if n_pairs < 2:
        raise ValueError(f"need at least 2 positive pairs for negatives, got {n_pairs}")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    norms = embeddings.norm(dim=1)
    if bool((norms == 0).any()):
        raise ValueError("zero-norm embedding has undefined cosine similarity")

    z = embeddings / norms[:, None]
    sim = (z @ z.T) / temperature
    sim = sim.masked_fill(torch.eye(rows, dtype=torch.bool, device=sim.device), float("-inf"))
    targets = torch.arange(rows, device=sim.device) ^ 1  # partner of 2k is 2k+1
    return F.cross_entropy(sim, targets)


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean negative log-softmax of the true-class logits."""
    if logits.ndim != 2:
        raise ValueError(f"expected N x K logits, got shape {tuple(logits.shape)}")
    if labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise ValueError(f"labels shape {tuple(labels.shape)} does not match logits {tuple(logits.shape)}")
    k = logits.shape[1]
    if bool((labels < 0).any()) or bool((labels >= k).any()):
        raise ValueError(f"labels must lie in [0, {k})")
    return F.cross_entropy(logits, labels)
