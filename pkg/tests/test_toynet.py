"""
Tests for the toy network: gradients, source training, pluggable
normalization slots and checkpoints.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.errors import ConvergenceError, FormatError
from src.harness.oracle import compute_true_stats
from src.normalize.base import StateMismatchError, standardize
from src.stats.core import instance_stats
from src.streams.synth import save_dataset, synth_source
from src.toynet.checkpoint import load_model, save_model
from src.toynet.model import (
    affine,
    forward_eval,
    gradient_check,
    head,
    init_model,
    init_norm_states,
    predict,
    softmax_cross_entropy,
)
from src.toynet.train import TrainConfig, evaluate_accuracy, train_source


@pytest.fixture(scope="module")
def held_out():
    return synth_source(n_per_class=200, seed=123)


class TestGradients:
    """Hand-written backward pass."""

    def test_matches_central_differences(self):
        model = init_model(2, [3, 3], 2, seed=0)
        rng = np.random.default_rng(1)
        model.blocks[0].norm.gamma = rng.uniform(0.5, 1.5, size=3)
        model.blocks[1].norm.beta = rng.normal(scale=0.3, size=3)
        x = rng.normal(size=(4, 2, 2))
        labels = np.array([0, 1, 1, 0])
        assert gradient_check(model, x, labels) < 1e-4

    def test_cross_entropy_uniform_logits(self):
        loss, grad = softmax_cross_entropy(np.zeros((3, 4)), np.array([0, 1, 3]))
        assert loss == pytest.approx(np.log(4))
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)

    def test_cross_entropy_large_logits_are_finite(self):
        loss, grad = softmax_cross_entropy(np.array([[1000.0, 0.0]]), np.array([1]))
        assert np.isfinite(loss)
        assert np.all(np.isfinite(grad))


class TestSourceTraining:
    """SGD on clean source data."""

    def test_reaches_required_accuracy(self, trained_model, source_data):
        assert trained_model.meta["train_accuracy"] >= TrainConfig().min_accuracy
        assert evaluate_accuracy(trained_model, source_data) == trained_model.meta["train_accuracy"]

    def test_generalizes_to_held_out_clean_data(self, trained_model, held_out):
        assert evaluate_accuracy(trained_model, held_out) >= 0.9

    def test_two_separated_classes(self):
        """Two classes far apart relative to their spread are learned almost perfectly."""
        model = train_source(synth_source(n_classes=2, seed=0), verbose=False)
        held = synth_source(n_classes=2, n_per_class=500, seed=77)
        assert evaluate_accuracy(model, held) >= 0.99

    def test_architecture_from_config(self, trained_model):
        assert trained_model.widths == [32, 32]
        assert trained_model.n_classes == 5
        assert trained_model.input_channels == 8

    def test_stored_means_match_full_dataset(self, trained_model, source_data):
        """Stored means of every slot sit within 5% of the feature std of the full-dataset means."""
        true = compute_true_stats(trained_model, source_data.samples)
        for src, ref in zip(trained_model.source_stats(), true):
            assert np.linalg.norm(src.mean - ref.mean) <= 0.05 * np.linalg.norm(ref.std)

    def test_same_seed_same_model(self):
        data = synth_source(n_per_class=30, seed=0)
        cfg = TrainConfig(epochs=2, min_accuracy=0.0)
        a = train_source(data, cfg, verbose=False)
        b = train_source(data, cfg, verbose=False)
        np.testing.assert_array_equal(a.head_weight, b.head_weight)
        np.testing.assert_array_equal(a.blocks[0].norm.mean, b.blocks[0].norm.mean)

    def test_convergence_error(self):
        data = synth_source(n_per_class=20, seed=0)
        cfg = TrainConfig(epochs=1, learning_rate=1e-9, min_accuracy=1.0)
        with pytest.raises(ConvergenceError) as exc:
            train_source(data, cfg, verbose=False)
        assert exc.value.threshold == 1.0
        assert exc.value.accuracy < 1.0

    @pytest.mark.parametrize("field,value", [("learning_rate", 0.0), ("batch_size", 1), ("epochs", 0)])
    def test_config_validation(self, field, value):
        with pytest.raises(ValidationError):
            TrainConfig(**{field: value})


class TestForwardEval:
    """Inference with pluggable normalization."""

    def test_same_states_same_logits(self, model, held_out):
        x = held_out.samples[:64]
        a, _ = forward_eval(model, x, "unmix", init_norm_states(model, "unmix", batch_size=64, seed=3))
        b, _ = forward_eval(model, x, "unmix", init_norm_states(model, "unmix", batch_size=64, seed=3))
        np.testing.assert_array_equal(a, b)

    def test_model_is_never_modified(self, model, held_out):
        before = [s.mean.copy() for s in model.source_stats()]
        states = init_norm_states(model, "unmix", batch_size=64)
        for start in range(0, 256, 64):
            forward_eval(model, held_out.samples[start:start + 64], "unmix", states)
        for src, ref in zip(model.source_stats(), before):
            np.testing.assert_array_equal(src.mean, ref)

    def test_source_logits_unchanged_by_other_kinds(self, model, held_out):
        x = held_out.samples[:64]
        before, _ = forward_eval(model, x, "source")
        for kind in ("tbn", "alpha-bn", "ema-bn", "unmix"):
            states = init_norm_states(model, kind, batch_size=32, seed=1)
            for start in range(0, 320, 32):
                _, states = forward_eval(model, held_out.samples[start:start + 32], kind, states)
        after, _ = forward_eval(model, x, "source")
        assert np.array_equal(before, after)

    def test_single_component_is_instance_norm_in_every_slot(self, model, held_out):
        x = held_out.samples[:16]
        states = init_norm_states(model, "unmix", batch_size=16, k=1, alpha=0.0)
        logits, _ = forward_eval(model, x, "unmix", states)

        a = x
        for block, state in zip(model.blocks, states):
            z = affine(a, block.weight, block.bias)
            inst = instance_stats(z)
            a = np.maximum(standardize(z, inst.mean, inst.var, block.norm.gamma, block.norm.beta, state.eps), 0.0)
        np.testing.assert_allclose(logits, head(model, a), rtol=1e-12, atol=1e-9)

    def test_state_lists_are_independent(self, model, held_out):
        first = init_norm_states(model, "unmix", batch_size=64, seed=0)
        second = init_norm_states(model, "unmix", batch_size=64, seed=0)
        forward_eval(model, held_out.samples[:64], "unmix", first)
        assert not np.array_equal(first[0].state.comp_mean, second[0].state.comp_mean)
        np.testing.assert_array_equal(second[0].state.comp_mean, second[0]._initial.comp_mean)

    def test_slots_get_their_own_components(self, model):
        states = init_norm_states(model, "unmix", batch_size=64, seed=0)
        assert states[0].state.channels == states[1].state.channels == 32
        assert not np.array_equal(states[0].state.comp_mean, states[1].state.comp_mean)

    def test_tbn_collapses_on_single_class_batches(self, model, held_out):
        """Batch statistics of one class remove the class signal; source statistics keep it."""
        tbn, source = [], []
        for m in range(held_out.n_classes):
            x = held_out.samples[held_out.labels == m][:64]
            tbn.append(np.mean(predict(forward_eval(model, x, "tbn")[0]) == m))
            source.append(np.mean(predict(forward_eval(model, x, "source")[0]) == m))
        assert np.mean(source) >= 0.9
        assert np.mean(tbn) < 0.5

    def test_tbn_matches_source_on_large_clean_batches(self, model, held_out):
        assert evaluate_accuracy(model, held_out, "tbn", batch_size=len(held_out)) >= 0.85

    def test_batch_of_one(self, model, held_out):
        for kind in ("tbn", "alpha-bn", "source"):
            logits, _ = forward_eval(model, held_out.samples[:1], kind)
            assert logits.shape == (1, 5)
            assert np.all(np.isfinite(logits))
        states = init_norm_states(model, "unmix", batch_size=1)
        logits, _ = forward_eval(model, held_out.samples[:1], "unmix", states)
        assert np.all(np.isfinite(logits))

    def test_selected_slots_only(self, model, held_out):
        states = init_norm_states(model, "unmix", norm_slots=[1], batch_size=64)
        assert [s.kind for s in states] == ["source_bn", "unmix_tns"]
        logits, _ = forward_eval(model, held_out.samples[:8], "unmix", states)
        assert logits.shape == (8, 5)

    def test_stateful_kind_needs_states(self, model, held_out):
        with pytest.raises(StateMismatchError, match="stateful"):
            forward_eval(model, held_out.samples[:4], "unmix")

    def test_states_of_another_kind(self, model, held_out):
        states = init_norm_states(model, "ema-bn")
        with pytest.raises(StateMismatchError, match="ema_bn"):
            forward_eval(model, held_out.samples[:4], "unmix", states)

    def test_wrong_number_of_states(self, model, held_out):
        states = init_norm_states(model, "tbn")[:1]
        with pytest.raises(StateMismatchError, match="slots"):
            forward_eval(model, held_out.samples[:4], "tbn", states)

    def test_unknown_slot(self, model):
        with pytest.raises(StateMismatchError, match="slot"):
            init_norm_states(model, "unmix", norm_slots=[2])


class TestCheckpoint:
    """Versioned .npz checkpoints."""

    def test_round_trip(self, model, held_out, tmp_path):
        path = save_model(model, str(tmp_path / "model.npz"))
        loaded = load_model(path)
        x = held_out.samples[:32]
        np.testing.assert_array_equal(forward_eval(loaded, x)[0], forward_eval(model, x)[0])
        assert loaded.meta["train_accuracy"] == model.meta["train_accuracy"]
        assert loaded.meta["hidden"] == [32, 32]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_model(str(tmp_path / "missing.npz"))

    def test_other_archive(self, tmp_path):
        path = save_dataset(synth_source(n_per_class=2), str(tmp_path / "data.npz"))
        with pytest.raises(FormatError, match="unmix-toynet"):
            load_model(path)
