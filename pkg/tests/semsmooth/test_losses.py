import math

import numpy as np
import pytest
import torch

from semsmooth import losses
from semsmooth.embeddings import PAD, Vocabulary
from semsmooth.errors import ContractError, NumericError
from semsmooth.gradcheck import relative_error
from semsmooth.smoothing import HardTargets, UniformSmoothing, one_hot


def random_instance(rng, k):
    """A strictly positive target distribution and logits of moderate size."""
    return rng.dirichlet(np.ones(k)), rng.normal(scale=3.0, size=k)


class TestSoftmax:
    def test_uniform(self):
        assert losses.softmax([0.5] * 4).tolist() == pytest.approx([0.25] * 4)

    def test_hand_computed(self):
        assert losses.softmax([1.0, 0.0]).tolist() == pytest.approx(
            [0.73105858, 0.26894142], abs=1e-8
        )

    def test_shift_invariant(self):
        z = np.array([0.3, -1.2, 2.5])
        assert torch.allclose(losses.softmax(z), losses.softmax(z + 100.0), rtol=0, atol=1e-12)

    def test_large_logits(self):
        p = losses.softmax([1000.0, 0.0])
        assert torch.all(torch.isfinite(p))
        assert float(p.sum()) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("bad", (math.inf, -math.inf, math.nan))
    def test_non_finite(self, bad):
        with pytest.raises(NumericError):
            losses.softmax([0.0, bad])


class TestLosses:
    @pytest.mark.parametrize("k", (2, 5, 11))
    def test_one_hot_uniform_logits(self, k):
        result = losses.cross_entropy_soft(one_hot(1, k), np.zeros(k))
        assert result.loss == pytest.approx(math.log(k))

    def test_logits_match_target(self):
        q = np.array([0.5, 0.3, 0.2])
        ce = losses.cross_entropy_soft(q, np.log(q))
        kl = losses.kl_divergence_loss(q, np.log(q))

        assert ce.loss == pytest.approx(losses.entropy(q))
        assert kl.loss == pytest.approx(0.0, abs=1e-12)
        assert torch.allclose(ce.gradient, torch.zeros(3, dtype=torch.float64), atol=1e-12)

    def test_one_hot_ce_equals_kl(self):
        q = one_hot(2, 4)
        z = [0.1, -0.4, 1.3, 0.0]
        assert losses.kl_divergence_loss(q, z).loss == losses.cross_entropy_soft(q, z).loss

    def test_entropy_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            q, z = random_instance(rng, int(rng.integers(2, 51)))
            ce = losses.cross_entropy_soft(q, z)
            kl = losses.kl_divergence_loss(q, z)

            assert ce.loss - kl.loss == pytest.approx(losses.entropy(q), abs=1e-9)
            assert kl.loss >= -1e-12
            assert torch.allclose(ce.gradient, kl.gradient, rtol=0, atol=1e-12)

    def test_zero_entries(self):
        q = np.array([0.0, 0.9, 0.1, 0.0])
        result = losses.kl_divergence_loss(q, [0.0, 1.0, 2.0, 3.0])
        assert math.isfinite(result.loss)

    @pytest.mark.parametrize("loss_fn", (losses.cross_entropy_soft, losses.kl_divergence_loss))
    @pytest.mark.parametrize("k", (2, 7, 50))
    def test_gradient_finite_differences(self, loss_fn, k):
        rng = np.random.default_rng(k)
        q, z = random_instance(rng, k)
        step = 1e-5

        gradient = loss_fn(q, z).gradient

        assert float(gradient.sum()) == pytest.approx(0.0, abs=1e-9)
        for m in range(k):
            z_plus, z_minus = z.copy(), z.copy()
            z_plus[m] += step
            z_minus[m] -= step
            numeric = (loss_fn(q, z_plus).loss - loss_fn(q, z_minus).loss) / (2 * step)
            assert relative_error(float(gradient[m]), numeric, floor=1e-3) < 1e-6

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            losses.cross_entropy_soft(one_hot(0, 3), [0.0, 0.0])
        with pytest.raises(ContractError):
            losses.kl_divergence_loss([0.5, 0.5], [0.0, 0.0, 0.0])

    def test_entropy(self):
        assert losses.entropy(one_hot(0, 3)) == 0.0
        assert losses.entropy([0.5, 0.5]) == pytest.approx(math.log(2))


class TestBatchLoss:
    @pytest.fixture
    def vocab(self):
        return Vocabulary.from_tokens(("a", "b"))

    @pytest.mark.parametrize("loss_kind", ("ce", "kl"))
    def test_single_token(self, vocab, loss_kind):
        policy = UniformSmoothing(vocab, 0.1)
        z = np.random.default_rng(1).normal(size=(1, len(vocab)))
        single = {"ce": losses.cross_entropy_soft, "kl": losses.kl_divergence_loss}[loss_kind](
            policy.distribution(6), z[0]
        )

        loss, gradient = losses.batch_loss(policy, [6], z, loss_kind)

        assert loss == pytest.approx(single.loss, abs=1e-12)
        assert torch.allclose(gradient[0], single.gradient, atol=1e-12)

    def test_two_tokens(self, vocab):
        z = np.zeros((2, len(vocab)))
        z[1, 6] = 2.0

        loss, _ = losses.batch_loss(HardTargets(vocab), [7, 6], z, losses.LossKind.CE)

        expected = (math.log(8) - math.log(math.exp(2) / (math.exp(2) + 7))) / 2
        assert loss == pytest.approx(expected)

    def test_duplicated_rows(self, vocab):
        policy = UniformSmoothing(vocab, 0.2)
        z = np.random.default_rng(2).normal(size=(3, len(vocab)))
        targets = [6, 7, 3]

        loss, _ = losses.batch_loss(policy, targets, z, "kl")
        doubled, _ = losses.batch_loss(policy, targets * 2, np.vstack([z, z]), "kl")

        assert doubled == pytest.approx(loss, abs=1e-12)

    def test_padding(self, vocab):
        policy = HardTargets(vocab)
        z = np.random.default_rng(3).normal(size=(3, len(vocab)))

        loss, gradient = losses.batch_loss(policy, [6, PAD, 7], z, "ce")
        unpadded, _ = losses.batch_loss(policy, [6, 7], z[[0, 2]], "ce")

        assert loss == pytest.approx(unpadded)
        assert torch.all(gradient[1] == 0)
        assert float(gradient.sum()) == pytest.approx(0.0, abs=1e-9)

    def test_padding_only(self, vocab):
        with pytest.raises(ContractError):
            losses.batch_loss(HardTargets(vocab), [PAD, PAD], np.zeros((2, len(vocab))), "ce")

    def test_shape_mismatch(self, vocab):
        with pytest.raises(ContractError):
            losses.batch_loss(HardTargets(vocab), [6, 7], np.zeros((1, len(vocab))), "ce")
        with pytest.raises(ContractError):
            losses.batch_loss(HardTargets(vocab), [6], np.zeros((1, 3)), "ce")

    def test_loss_kind(self):
        assert losses.LossKind("kl") is losses.LossKind.KL
        assert str(losses.LossKind.CE) == "ce"
        with pytest.raises(ValueError):
            losses.LossKind("mse")
