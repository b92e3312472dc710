import math

import numpy as np
import pytest
import torch

from stagewise.model.losses import cross_entropy, nt_xent


def nt_xent_oracle(embeddings, temperature):
    """Dense similarity-softmax computation, independent of the torch path."""
    z = np.asarray(embeddings, dtype=np.float64)
    z = z / np.linalg.norm(z, axis=1, keepdims=True)
    sim = z @ z.T / temperature
    n = z.shape[0]
    total = 0.0
    for i in range(n):
        partner = i ^ 1
        others = [j for j in range(n) if j != i]
        log_denom = np.log(np.sum(np.exp(sim[i, others])))
        total += -(sim[i, partner] - log_denom)
    return total / n


def cross_entropy_oracle(logits, labels):
    """Per-row softmax by direct summation."""
    logits = np.asarray(logits, dtype=np.float64)
    total = 0.0
    for row, label in zip(logits, labels):
        total += -(row[label] - np.log(np.sum(np.exp(row))))
    return total / len(labels)


class TestNtXent:
    def test_identical_embeddings_give_log3(self):
        z = torch.ones(4, 8)
        loss = nt_xent(z, temperature=0.5)
        assert float(loss) == pytest.approx(math.log(3.0), abs=1e-6)

    @pytest.mark.parametrize("n_pairs", [2, 4, 8])
    def test_matches_bruteforce_oracle(self, n_pairs):
        rng = np.random.default_rng(n_pairs)
        z = rng.normal(size=(2 * n_pairs, 16))
        expected = nt_xent_oracle(z, 0.5)
        got = float(nt_xent(torch.from_numpy(z), temperature=0.5))
        assert got == pytest.approx(expected, abs=1e-6)

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        z = torch.from_numpy(rng.normal(size=(8, 12)))
        base = float(nt_xent(z, 0.5))
        scaled = float(nt_xent(z * 3.7, 0.5))
        assert scaled == pytest.approx(base, abs=1e-6)

    def test_rejects_degenerate_batches(self):
        with pytest.raises(ValueError, match="pairs"):
            nt_xent(torch.randn(2, 8), 0.5)  # N=1: no negatives
        with pytest.raises(ValueError, match="pair up"):
            nt_xent(torch.randn(5, 8), 0.5)
        with pytest.raises(ValueError, match="zero-norm"):
            z = torch.randn(6, 8)
            z[3] = 0.0
            nt_xent(z, 0.5)
        with pytest.raises(ValueError, match="temperature"):
            nt_xent(torch.randn(6, 8), 0.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        z0 = rng.normal(size=(6, 5))
        z = torch.tensor(z0, dtype=torch.float64, requires_grad=True)
        loss = nt_xent(z, 0.5)
        loss.backward()
        analytic = z.grad.numpy()
        step = 1e-4
        for i, j in [(0, 0), (1, 3), (2, 4), (5, 1)]:
            plus, minus = z0.copy(), z0.copy()
            plus[i, j] += step
            minus[i, j] -= step
            numeric = (nt_xent_oracle(plus, 0.5) - nt_xent_oracle(minus, 0.5)) / (2 * step)
            denom = max(abs(numeric), 1e-8)
            assert abs(analytic[i, j] - numeric) / denom <= 1e-3


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss = cross_entropy(torch.zeros(5, 4), torch.zeros(5, dtype=torch.long))
        assert float(loss) == pytest.approx(math.log(4.0), abs=1e-7)

    def test_large_margin_drives_loss_to_zero(self):
        losses = []
        for margin in (1.0, 10.0, 100.0):
            logits = torch.zeros(3, 5)
            logits[:, 2] = margin
            losses.append(float(cross_entropy(logits, torch.full((3,), 2, dtype=torch.long))))
        assert losses[0] > losses[1] > losses[2]
        assert losses[2] < 1e-6

    def test_matches_direct_summation_oracle(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(8, 5))
        labels = rng.integers(0, 5, size=8)
        expected = cross_entropy_oracle(logits, labels)
        got = float(cross_entropy(torch.from_numpy(logits), torch.from_numpy(labels)))
        assert got == pytest.approx(expected, abs=1e-7)

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="labels"):
            cross_entropy(torch.zeros(2, 3), torch.tensor([0, 3]))
        with pytest.raises(ValueError, match="labels"):
            cross_entropy(torch.zeros(2, 3), torch.tensor([-1, 0]))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        logits0 = rng.normal(size=(4, 6))
        labels = rng.integers(0, 6, size=4)
        logits = torch.tensor(logits0, dtype=torch.float64, requires_grad=True)
        loss = cross_entropy(logits, torch.from_numpy(labels))
        loss.backward()
        analytic = logits.grad.numpy()
        step = 1e-4
        for i, j in [(0, 0), (1, 5), (3, 2)]:
            plus, minus = logits0.copy(), logits0.copy()
            plus[i, j] += step
            minus[i, j] -= step
            numeric = (cross_entropy_oracle(plus, labels) - cross_entropy_oracle(minus, labels)) / (2 * step)
            denom = max(abs(numeric), 1e-8)
            assert abs(analytic[i, j] - numeric) / denom <= 1e-3
