"""
Tests for synthetic data, domain shifts, stream ordering and domain schedules.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import chi2

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.errors import FormatError
from src.streams.ordering import (
    dirichlet_order,
    iid_order,
    load_order,
    normalized_entropy,
    save_order,
    slot_histograms,
    tv_distance,
)
from src.streams.schedule import reset_points, schedule_domains
from src.streams.shifts import DomainShift, apply_shift, load_domains
from src.streams.stream import StreamConfig, build_stream
from src.streams.synth import class_layout, load_dataset, save_dataset, synth_source


class TestSynthSource:
    """Gaussian-class dataset generation."""

    def test_zero_spread_gives_class_means(self):
        data = synth_source(n_classes=2, channels=3, spatial=2, n_per_class=5, spread=0.0, seed=0)
        expected = data.class_means[data.labels][:, :, None]
        assert np.array_equal(data.samples, np.broadcast_to(expected, data.samples.shape))

    def test_empirical_class_means(self):
        """Per-class sample means sit within 3 standard errors of the class means."""
        n = 10_000
        data = synth_source(n_classes=2, channels=2, spatial=1, n_per_class=n, spread=1.5, seed=1)
        for m in range(2):
            emp = data.samples[data.labels == m, :, 0].mean(axis=0)
            assert np.all(np.abs(emp - data.class_means[m]) <= 3 * 1.5 / np.sqrt(n))

    def test_same_seed_same_data(self):
        a = synth_source(seed=5, n_per_class=20)
        b = synth_source(seed=5, n_per_class=20)
        assert np.array_equal(a.samples, b.samples)
        assert np.array_equal(a.labels, b.labels)

    def test_default_layout(self):
        data = synth_source(n_per_class=3)
        assert data.samples.shape == (15, 8, 4)
        assert data.n_classes == 5

    def test_classes_are_separated(self):
        means = class_layout(5, 8, 2.0)
        dists = np.linalg.norm(means[:, None] - means[None], axis=2)
        assert np.all(dists[~np.eye(5, dtype=bool)] > 3.0)

    def test_rejects_single_class(self):
        with pytest.raises(ValueError, match="2 classes"):
            synth_source(n_classes=1)

    def test_save_load(self, tmp_path):
        data = synth_source(n_per_class=4, seed=2)
        path = save_dataset(data, str(tmp_path / "data.npz"))
        loaded = load_dataset(path)
        assert np.array_equal(loaded.samples, data.samples)
        assert np.array_equal(loaded.labels, data.labels)

    def test_load_rejects_other_version(self, tmp_path):
        data = synth_source(n_per_class=2, seed=2)
        path = str(tmp_path / "old.npz")
        np.savez(path, format=np.array("unmix-dataset"), version=np.array(99), samples=data.samples,
                 labels=data.labels, class_means=data.class_means, class_vars=data.class_vars)
        with pytest.raises(FormatError, match="version"):
            load_dataset(path)


class TestDomainShift:
    """Parametric shifts."""

    def test_identity_is_exact(self):
        x = np.random.default_rng(0).normal(size=(4, 3, 2))
        out = apply_shift(x, DomainShift.identity(3))
        assert np.array_equal(out, x)
        assert out is not x

    def test_scale(self):
        shift = DomainShift(id="double", scale=[2.0], offset=[0.0])
        np.testing.assert_array_equal(apply_shift(np.array([[[1.0, -1.0]]]), shift), [[[2.0, -2.0]]])

    def test_noise_level(self):
        x = np.zeros((100_000, 1, 1))
        out = apply_shift(x, DomainShift(id="n", scale=[1.0], offset=[0.0], noise_std=0.1), seed=3)
        assert out.std() == pytest.approx(0.1, rel=0.02)

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError, match="positive"):
            DomainShift(id="bad", scale=[1.0, 0.0], offset=[0.0, 0.0])

    def test_channel_mismatch(self):
        with pytest.raises(ValueError, match="channels"):
            apply_shift(np.zeros((1, 2, 1)), DomainShift.identity(3))

    def test_config_domains(self):
        domains = load_domains(["shifted", "gain", "clean"], channels=8)
        assert [d.id for d in domains] == ["shifted", "gain", "clean"]
        assert domains[1].scale.shape == (8,)
        assert np.all(domains[1].scale == 1.5)
        assert domains[2].is_identity

    def test_unknown_domain(self):
        with pytest.raises(ValueError, match="Unknown domain"):
            load_domains(["fog"])


class TestDirichletOrder:
    """Label-correlated orderings."""

    def test_is_permutation(self):
        labels = np.repeat(np.arange(4), 50)
        for delta in (0.01, 1.0, 100.0):
            order = dirichlet_order(labels, delta=delta, slot_size=16, seed=1)
            assert np.array_equal(np.sort(order), np.arange(200))

    def test_uneven_classes_and_partial_slot(self):
        labels = np.array([0] * 7 + [1] * 2 + [2] * 30)
        order = dirichlet_order(labels, delta=0.1, slot_size=8, seed=2)
        assert np.array_equal(np.sort(order), np.arange(39))

    def test_large_delta_is_near_uniform(self):
        """Per-slot chi-square below the 99th percentile in at least 95% of slots."""
        m, slot = 5, 100
        labels = np.repeat(np.arange(m), 2000)
        critical = chi2.ppf(0.99, df=m - 1)
        passed, total = 0, 0
        for seed in range(10):
            hist = slot_histograms(labels, dirichlet_order(labels, delta=1e6, slot_size=slot, seed=seed), slot, m)
            stat = ((hist - slot / m) ** 2 / (slot / m)).sum(axis=1)
            passed += int(np.sum(stat < critical))
            total += hist.shape[0]
        assert passed / total >= 0.95

    def test_small_delta_clumps_labels(self):
        labels = np.repeat(np.arange(10), 200)
        entropies = []
        for seed in range(10):
            hist = slot_histograms(labels, dirichlet_order(labels, delta=0.01, slot_size=64, seed=seed), 64, 10)
            entropies.append(normalized_entropy(hist).mean())
        assert np.mean(entropies) < 0.5

    def test_tv_distance_shrinks_with_delta(self):
        labels = np.repeat(np.arange(5), 400)
        reference = np.full(5, 0.2)
        tv = {}
        for delta in (0.01, 1e6):
            runs = [
                tv_distance(slot_histograms(labels, dirichlet_order(labels, delta, 64, seed), 64, 5), reference).mean()
                for seed in range(10)
            ]
            tv[delta] = np.mean(runs)
        assert tv[1e6] < tv[0.01]

    def test_rejects_nonpositive_delta(self):
        with pytest.raises(ValueError, match="delta"):
            dirichlet_order(np.zeros(4, dtype=int), delta=0.0)

    def test_same_seed_same_order(self):
        labels = np.repeat(np.arange(3), 30)
        assert np.array_equal(dirichlet_order(labels, 0.1, 8, seed=4), dirichlet_order(labels, 0.1, 8, seed=4))

    def test_iid_order(self):
        assert np.array_equal(np.sort(iid_order(50, seed=0)), np.arange(50))

    def test_save_load(self, tmp_path):
        order = dirichlet_order(np.repeat(np.arange(3), 10), 0.1, 4, seed=0)
        path = save_order(order, str(tmp_path / "order.txt"), meta={"delta": 0.1})
        assert np.array_equal(load_order(path), order)

    def test_load_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.txt"
        path.write_text("1\n2\n3\n")
        with pytest.raises(FormatError):
            load_order(str(path))


class TestScheduleDomains:
    """Per-batch domain assignment."""

    def test_single(self):
        assignments = schedule_domains("single", ["a"], 10, batch_size=4)
        assert len(assignments) == 10
        assert all(np.all(a == 0) for a in assignments)

    def test_continual_segments(self):
        assignments = schedule_domains("continual", ["a", "b", "c"], 9, batch_size=2)
        assert [int(a[0]) for a in assignments] == [0, 0, 0, 1, 1, 1, 2, 2, 2]

    def test_mixed_frequencies(self):
        assignments = schedule_domains("mixed", ["a", "b", "c"], 100, seed=0, batch_size=100)
        freq = np.bincount(np.concatenate(assignments), minlength=3) / 10_000
        np.testing.assert_allclose(freq, 1 / 3, atol=0.02)

    def test_unknown_scenario(self):
        with pytest.raises(ValueError, match="Unknown scenario"):
            schedule_domains("episodic", ["a"], 3)

    def test_resets_only_in_single(self):
        assignments = schedule_domains("single", ["a", "b"], 4, batch_size=1)
        assert reset_points("single", assignments) == [False, False, True, False]
        assert reset_points("continual", assignments) == [False] * 4


class TestBuildStream:
    """Full stream assembly."""

    def test_continual_covers_each_domain_once(self):
        labels = np.repeat(np.arange(3), 20)
        stream = build_stream(labels, StreamConfig(batch_size=8, domains=["shifted", "gain"], scenario="continual"))
        for d in range(2):
            batches = [b for b in stream if b.domain_ids[0] == d]
            assert all(np.all(b.domain_ids == d) for b in batches)
            assert np.array_equal(np.sort(np.concatenate([b.indices for b in batches])), np.arange(60))
        assert not any(b.reset for b in stream)

    def test_single_resets_at_domain_change(self):
        labels = np.repeat(np.arange(2), 16)
        stream = build_stream(labels, StreamConfig(batch_size=8, domains=["shifted", "gain"], scenario="single"))
        assert [b.reset for b in stream] == [False] * 4 + [True] + [False] * 3

    def test_mixed_covers_all_pairs(self):
        labels = np.repeat(np.arange(2), 10)
        stream = build_stream(labels, StreamConfig(batch_size=6, domains=["shifted", "gain", "noise"], scenario="mixed"))
        indices = np.concatenate([b.indices for b in stream])
        assert np.array_equal(np.bincount(indices), np.full(20, 3))
        assert all(len(b.domain_ids) == len(b) for b in stream)

    def test_same_seed_same_stream(self):
        labels = np.repeat(np.arange(3), 10)
        cfg = StreamConfig(batch_size=4, seed=9)
        a, b = build_stream(labels, cfg), build_stream(labels, cfg)
        assert all(np.array_equal(x.indices, y.indices) for x, y in zip(a, b))

    def test_config_defaults(self):
        cfg = StreamConfig()
        assert cfg.delta == 0.1
        assert cfg.batch_size == 64
        assert cfg.effective_slot_size == 64
        assert cfg.scenario == "continual"

    @pytest.mark.parametrize("field,value", [("delta", 0.0), ("batch_size", 0), ("slot_size", 0), ("scenario", "x")])
    def test_config_validation(self, field, value):
        with pytest.raises(ValidationError):
            StreamConfig(**{field: value})
