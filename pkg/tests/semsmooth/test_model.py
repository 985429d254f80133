import math

import numpy as np
import pytest
import torch

from semsmooth import model as model_mod
from semsmooth.corpus import Conversation, build_all_examples, build_examples, build_vocab
from semsmooth.embeddings import BOS, EOS, seeded_embeddings
from semsmooth.errors import ConfigError, ContractError, FormatError, NumericError
from semsmooth.losses import LossKind
from semsmooth.runspec import RunSpec, target_policy_for
from semsmooth.smoothing import HardTargets, UniformSmoothing
from semsmooth.subcommands.evaluate import evaluate_model
from semsmooth.synthetic import DEFAULT_CLUSTERS, SUBJECTS, synthetic_corpus, synthetic_embeddings

from ..common import TINY_MODEL


def tiny_model(vocab, **overrides):
    config = model_mod.ModelConfig(vocab_size=len(vocab), **{**TINY_MODEL, **overrides})
    return model_mod.init_model(config, seeded_embeddings(vocab, 5))


@pytest.fixture
def vocab(tiny_conversations):
    return build_vocab(tiny_conversations)


@pytest.fixture
def examples(tiny_conversations, vocab):
    return build_all_examples(tiny_conversations, vocab)


@pytest.fixture
def batch(examples):
    return model_mod.make_batch(examples)


class TestConfigs:
    def test_presets(self):
        paper = model_mod.ModelConfig.paper(100)
        assert (paper.n_layers, paper.d_model, paper.n_heads) == (3, 300, 6)
        desk = model_mod.ModelConfig.desk(100)
        assert (desk.n_layers, desk.d_model, desk.n_heads) == (2, 64, 2)
        assert model_mod.TrainConfig.paper() == model_mod.TrainConfig()
        assert (model_mod.TrainConfig.desk().batch_size, model_mod.TrainConfig.desk().epochs) == (
            16,
            5,
        )

    def test_train_defaults(self):
        config = model_mod.TrainConfig()
        assert config.learning_rate == 2e-4
        assert config.batch_size == 64
        assert config.epochs == 15
        assert config.clip_norm_value == 1.0

    @pytest.mark.parametrize(
        "overrides",
        (dict(d_model=10, n_heads=3), dict(dropout=1.0), dict(n_layers=0), dict(vocab_size=1)),
        ids=("heads", "dropout", "layers", "vocab"),
    )
    def test_invalid_model_config(self, overrides):
        with pytest.raises(ConfigError):
            model_mod.ModelConfig(**{"vocab_size": 20, **overrides})

    @pytest.mark.parametrize(
        "overrides",
        (dict(learning_rate=0.0), dict(epochs=0), dict(clip_norm_value=0.0), dict(batch_size=0)),
        ids=("learning-rate", "epochs", "clip", "batch-size"),
    )
    def test_invalid_train_config(self, overrides):
        with pytest.raises(ConfigError):
            model_mod.TrainConfig(**overrides)


class TestInitModel:
    def test_deterministic(self, vocab):
        first = tiny_model(vocab).state_dict()
        second = tiny_model(vocab).state_dict()
        assert all(torch.equal(first[name], second[name]) for name in first)

    def test_projection(self, vocab):
        model = tiny_model(vocab)
        assert model.embedding.weight.shape == (len(vocab), TINY_MODEL["d_model"])
        assert model.embedding.weight.dtype == torch.float64

    def test_without_projection(self, vocab):
        config = model_mod.ModelConfig(vocab_size=len(vocab), project_embeddings=False, **TINY_MODEL)
        with pytest.raises(ConfigError):
            model_mod.init_model(config, seeded_embeddings(vocab, 5))

    def test_same_dimension_copies_vectors(self, vocab):
        embeddings = seeded_embeddings(vocab, TINY_MODEL["d_model"])
        config = model_mod.ModelConfig(vocab_size=len(vocab), **TINY_MODEL)
        model = model_mod.init_model(config, embeddings)
        assert np.array_equal(model.embedding.weight.detach().numpy(), embeddings.values)

    def test_row_mismatch(self, vocab):
        config = model_mod.ModelConfig(vocab_size=len(vocab) + 1, **TINY_MODEL)
        with pytest.raises(ConfigError):
            model_mod.init_model(config, seeded_embeddings(vocab, 5))

    def test_paper_preset_width(self, vocab):
        config = model_mod.ModelConfig.paper(len(vocab))
        model = model_mod.init_model(config, seeded_embeddings(vocab, 300))
        assert model.embedding.weight.shape == (len(vocab), 300)
        assert len(model.encoder_layers) == len(model.decoder_layers) == 3


class TestForward:
    def test_shape(self, vocab, batch):
        model = tiny_model(vocab)
        model.eval()
        logits = model(batch.context_ids, batch.prefix_ids)
        assert logits.shape == (len(batch), batch.prefix_ids.shape[1], len(vocab))

    def test_eval_deterministic(self, vocab, batch):
        model = tiny_model(vocab, dropout=0.3)
        model.eval()
        with torch.no_grad():
            first = model(batch.context_ids, batch.prefix_ids)
            second = model(batch.context_ids, batch.prefix_ids)
        assert torch.equal(first, second)

    def test_dropout_follows_generator(self, vocab, batch):
        model = tiny_model(vocab, dropout=0.3)
        model.train()

        def run(seed):
            with torch.no_grad():
                return model(
                    batch.context_ids,
                    batch.prefix_ids,
                    torch.Generator().manual_seed(seed),
                )

        assert torch.equal(run(1), run(1))
        assert not torch.equal(run(1), run(2))

    def test_causal(self, vocab):
        model = tiny_model(vocab)
        model.eval()
        context = torch.tensor([[4, 6, 7, 8]])
        prefix = torch.tensor([[BOS, 9, 10, 11]])
        edited = torch.tensor([[BOS, 9, 12, 6]])

        with torch.no_grad():
            original = model(context, prefix)[0]
            changed = model(context, edited)[0]

        assert torch.equal(original[:2], changed[:2])
        assert not torch.equal(original[2:], changed[2:])

    def test_context_too_long(self, vocab):
        model = tiny_model(vocab)
        with pytest.raises(ContractError):
            model(torch.full((1, 51), 6), torch.tensor([[BOS]]))

    def test_batch_layout(self, examples, batch):
        first = examples[0]
        n = len(first.response_ids)
        assert batch.prefix_ids[0, 0] == BOS
        assert batch.prefix_ids[0, 1:n].tolist() == list(first.response_ids[:-1])
        assert batch.target_ids[0, :n].tolist() == list(first.response_ids)
        assert batch.n_tokens == sum(len(example.response_ids) for example in examples)


class TestBackward:
    def test_one_hot_equals_hard(self, vocab, batch):
        model = tiny_model(vocab)
        model.eval()

        hard = model_mod.backward(model, batch, HardTargets(vocab), "ce")
        hard_gradients = {name: grad.clone() for name, grad in hard.gradients.items()}
        zero_smoothing = model_mod.backward(model, batch, UniformSmoothing(vocab, 0.0), "ce")

        assert zero_smoothing.loss == pytest.approx(hard.loss, abs=1e-12)
        for name, gradient in zero_smoothing.gradients.items():
            assert torch.allclose(gradient, hard_gradients[name], atol=1e-12)

    def test_clipping(self, vocab, batch):
        model = tiny_model(vocab)
        model_mod.backward(model, batch, HardTargets(vocab), "ce")

        before = model_mod.clip_gradients(model, 1e-3)
        after = math.sqrt(sum(float((p.grad**2).sum()) for p in model.parameters()))

        assert before > 1e-3
        assert after <= 1e-3 + 1e-9


class TestTrain:
    def test_deterministic(self, vocab, examples):
        config = model_mod.TrainConfig(batch_size=2, epochs=3, seed=4)

        def run():
            return model_mod.train(
                tiny_model(vocab, dropout=0.1), examples, UniformSmoothing(vocab, 0.1), "kl", config
            ).loss_curve

        first = run()
        assert first == run()
        assert len(first) == 3
        assert all(math.isfinite(loss) for loss in first)

    def test_callback(self, vocab, examples):
        seen = []
        model_mod.train(
            tiny_model(vocab),
            examples,
            HardTargets(vocab),
            LossKind.CE,
            model_mod.TrainConfig(batch_size=4, epochs=2),
            epoch_callback=lambda epoch, loss: seen.append(epoch),
        )
        assert seen == [1, 2]

    def test_divergence(self, vocab, examples):
        model = tiny_model(vocab)
        with torch.no_grad():
            model.output.bias.fill_(math.nan)

        with pytest.raises(NumericError) as excinfo:
            model_mod.train(
                model, examples, HardTargets(vocab), "ce", model_mod.TrainConfig(epochs=1)
            )

        assert excinfo.value.diagnostics["epoch"] == 1
        assert excinfo.value.diagnostics["batch"] == 0

    def test_empty(self, vocab):
        with pytest.raises(ContractError):
            model_mod.train(
                tiny_model(vocab), [], HardTargets(vocab), "ce", model_mod.TrainConfig()
            )

    def test_overfit(self):
        fillers = ("good", "bad", "happy", "tiny")
        conversations = [
            Conversation(
                turns=(
                    f"how was the {subject} ?",
                    f"the {subject} was {fillers[number % len(fillers)]} .",
                )
            )
            for number, subject in enumerate(SUBJECTS[:20])
        ]
        _, lexicon = synthetic_corpus(0, 1)
        vocab = build_vocab(conversations)
        examples = build_all_examples(conversations, vocab)
        config = model_mod.ModelConfig.desk(len(vocab), dropout=0.0)
        model = model_mod.init_model(config, synthetic_embeddings(vocab, lexicon, dim=64))

        result = model_mod.train(
            model,
            examples,
            HardTargets(vocab),
            "ce",
            model_mod.TrainConfig(learning_rate=2e-3, batch_size=5, epochs=200),
        )

        assert len(examples) == 20
        assert result.loss_curve[-1] < 0.1
        for example in examples:
            decoded = model_mod.greedy_decode(result.model, example.context_ids, 20)
            assert tuple(decoded) == example.response_ids

        report = evaluate_model(result.model, vocab, conversations)
        assert report.bleu == pytest.approx(100.0)
        assert report.rougeL == pytest.approx(1.0)

    def test_semantic_smoothing_moves_mass_to_synonyms(self):
        """Over 5 seeds, semantic targets put more held-out mass on substitutes than hard ones."""

        def slot_probabilities(model, conversations, vocab):
            # (probability vector, true token) for every response position
            slots = []
            with torch.no_grad():
                for conversation in conversations:
                    (example,) = build_examples(conversation, vocab)
                    batch = model_mod.make_batch([example])
                    probabilities = torch.softmax(
                        model(batch.context_ids, batch.prefix_ids)[0], dim=-1
                    )
                    for position, token_id in enumerate(example.response_ids):
                        slots.append((probabilities[position], token_id))
            return slots

        def run(seed, spec):
            conversations, lexicon = synthetic_corpus(
                seed, 400, DEFAULT_CLUSTERS[:5], subjects=SUBJECTS[:30]
            )
            train_conversations, heldout = conversations[:200], conversations[200:]
            vocab = build_vocab(conversations)
            embeddings = synthetic_embeddings(vocab, lexicon, dim=32, seed=seed)
            config = model_mod.ModelConfig(
                vocab_size=len(vocab),
                n_layers=1,
                d_model=32,
                n_heads=2,
                d_ff=64,
                dropout=0.0,
                seed=seed,
            )
            train_config = model_mod.TrainConfig(
                learning_rate=2e-3, batch_size=16, epochs=30, seed=seed
            )
            model = model_mod.train(
                model_mod.init_model(config, embeddings),
                build_all_examples(train_conversations, vocab),
                target_policy_for(spec, vocab, embeddings, lexicon),
                "ce",
                train_config,
            ).model

            def substitutes(token_id):
                return [
                    vocab.index(word)
                    for word in lexicon.synonyms(vocab.token(token_id))
                    if word in vocab
                ]

            masses = [
                float(probabilities[substitutes(token_id)].sum())
                for probabilities, token_id in slot_probabilities(model, heldout, vocab)
                if substitutes(token_id)
            ]
            ranked_first = [
                int(probabilities.argmax()) == token_id
                for probabilities, token_id in slot_probabilities(
                    model, train_conversations, vocab
                )
                if substitutes(token_id)
            ]
            return sum(masses) / len(masses), len(masses), sum(ranked_first) / len(ranked_first)

        gaps = []
        for seed in range(5):
            hard_mass, n_slots, hard_ranked_first = run(seed, RunSpec())
            semantic_mass, _, semantic_ranked_first = run(seed, RunSpec(s=0.1, t=0.5, w=False))

            assert n_slots >= 200
            assert hard_ranked_first >= 0.95
            assert semantic_ranked_first >= 0.95
            gaps.append(semantic_mass - hard_mass)

        assert sum(gap > 0 for gap in gaps) >= 4, gaps


class TestDecode:
    def test_greedy(self, vocab, examples):
        model = tiny_model(vocab)

        first = model_mod.greedy_decode(model, examples[0].context_ids, 5)
        second = model_mod.greedy_decode(model, examples[0].context_ids, 5)

        assert first == second
        assert 1 <= len(first) <= 5
        assert EOS not in first[:-1]

    def test_empty_context(self, vocab):
        assert model_mod.greedy_decode(tiny_model(vocab), [], 3)

    def test_beam_width_one_is_greedy(self, vocab, examples):
        model = tiny_model(vocab)
        context = examples[1].context_ids
        assert model_mod.beam_decode(model, context, 6, 1) == model_mod.greedy_decode(
            model, context, 6
        )

    def test_beam(self, vocab, examples):
        decoded = model_mod.beam_decode(tiny_model(vocab), examples[1].context_ids, 6, 3)
        assert 1 <= len(decoded) <= 6
        assert EOS not in decoded[:-1]

    def test_invalid_beam_width(self, vocab):
        with pytest.raises(ConfigError):
            model_mod.beam_decode(tiny_model(vocab), [6], 3, 0)


class TestCheckpoint:
    def test_save_and_load(self, tmp_path, vocab, batch):
        model = tiny_model(vocab)
        model.eval()
        path = tmp_path / "checkpoint.pt"

        model_mod.save_checkpoint(path, model, vocab, {"runspec": RunSpec(s=0.1).as_dict()})
        loaded, loaded_vocab, metadata = model_mod.load_checkpoint(path)

        assert loaded_vocab == vocab
        assert metadata["runspec"]["s"] == 0.1
        assert not loaded.training
        with torch.no_grad():
            assert torch.equal(
                model(batch.context_ids, batch.prefix_ids),
                loaded(batch.context_ids, batch.prefix_ids),
            )

    def test_vocab_mismatch(self, tmp_path, vocab, tiny_vocab):
        with pytest.raises(ContractError):
            model_mod.save_checkpoint(tmp_path / "checkpoint.pt", tiny_model(vocab), tiny_vocab)

    def test_garbage(self, tmp_path):
        path = tmp_path / "checkpoint.pt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(FormatError):
            model_mod.load_checkpoint(path)
