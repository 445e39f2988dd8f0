"""
Online test-time adaptation experiment.

Streams the test set batch by batch through a trained model, in order, and
records the error and normalization bias after every batch.
"""

import os
import time

import numpy as np
from tqdm import tqdm

from config.config_loader import get, get_path
from src.normalize.base import StateMismatchError
from src.streams.shifts import apply_shift, load_domains
from src.streams.stream import build_stream
from src.streams.synth import SynthDataset, synth_source
from src.toynet.checkpoint import load_model
from src.toynet.model import ToyModel, forward_eval, init_norm_states, predict
from src.toynet.train import TrainConfig, train_source
from .config import ExperimentConfig
from .oracle import compute_true_stats
from .trace import MetricsRecord, MetricsTrace


def resolve_model(config: ExperimentConfig, verbose: bool = False) -> ToyModel:
    """
    Model for an experiment: the checkpoint named in the config, else the
    default checkpoint path if it exists, else a freshly trained source model.
    """
    if config.model:
        return load_model(config.model)

    default_path = get_path("settings", "output.model_path")
    if os.path.exists(default_path):
        if verbose:
            print(f"  Using checkpoint: {default_path}")
        return load_model(default_path)

    if verbose:
        print("  No checkpoint found, training a source model")
    source = synth_source(seed=TrainConfig().seed)
    return train_source(source, verbose=verbose)


def held_out_dataset(config: ExperimentConfig) -> SynthDataset:
    """Held-out clean test split for an experiment seed."""
    offset = get("streams", "dataset.test_seed_offset", 1000)
    return synth_source(n_per_class=config.n_per_class, seed=config.seed + offset)


def shifted_copies(samples: np.ndarray, domain_ids: list[str], seed: int) -> np.ndarray:
    """(D, N, C0, L0) copies of the test inputs, one per domain."""
    shifts = load_domains(domain_ids, samples.shape[1])
    seeds = np.random.SeedSequence([seed, 1]).spawn(len(shifts))
    return np.stack([
        apply_shift(samples, shift, np.random.default_rng(s)) for shift, s in zip(shifts, seeds)
    ])


def run_experiment(
    config: ExperimentConfig,
    model: ToyModel = None,
    dataset: SynthDataset = None,
    verbose: bool = False,
) -> MetricsTrace:
    """
    Run one online experiment.

    Per batch: forward pass with the configured normalizer, batch error against
    the true labels, and per slot the L2 distance between the statistics the
    normalizer currently uses and the true feature mean of the batch's domain
    (pooled over all domains in the mixed scenario). Normalizer state is reset
    at domain boundaries in the single scenario only.

    Args:
        config: Validated experiment configuration
        model: Trained model (default: see resolve_model)
        dataset: Clean test data (default: synthetic split for config.seed)
        verbose: Print steps and show a progress bar

    Returns:
        MetricsTrace with one record per batch

    Raises:
        StateMismatchError: if the model does not fit the data
    """
    if verbose:
        print(f"Experiment: norm={config.norm} scenario={config.scenario} delta={config.delta} "
              f"B={config.batch_size} seed={config.seed}")
        print("Step 1: Loading model...")
    if model is None:
        model = resolve_model(config, verbose)

    if dataset is None:
        dataset = held_out_dataset(config)
    if dataset.samples.shape[1] != model.input_channels:
        raise StateMismatchError(
            f"Data has {dataset.samples.shape[1]} channels, model expects {model.input_channels}"
        )
    if dataset.n_classes != model.n_classes:
        raise StateMismatchError(f"Data has {dataset.n_classes} classes, model predicts {model.n_classes}")

    if verbose:
        print(f"Step 2: Shifting {len(dataset)} test samples into {len(config.domains)} domain(s)...")
    inputs = shifted_copies(dataset.samples, config.domains, config.seed)

    if verbose:
        print("Step 3: Computing true feature statistics...")
    if config.scenario == "mixed":
        pooled = compute_true_stats(model, inputs.reshape(-1, *inputs.shape[2:]))
        true_means = [[s.mean for s in pooled]] * len(config.domains)
    else:
        true_means = [[s.mean for s in compute_true_stats(model, x)] for x in inputs]

    if verbose:
        print("Step 4: Building stream...")
    stream = build_stream(dataset.labels, config.stream_config())
    states = init_norm_states(
        model,
        config.norm,
        config.norm_slots,
        batch_size=config.batch_size,
        seed=config.seed,
        **config.normalizer_kwargs(),
    )

    if verbose:
        print(f"Step 5: Streaming {len(stream)} batches...")

    trace = MetricsTrace(config=config.model_dump(mode="json"))
    wrong, seen = 0, 0
    for batch in tqdm(stream, desc="Streaming", unit="batch", disable=not verbose):
        if batch.reset:
            for state in states:
                state.reset()

        x = inputs[batch.domain_ids, batch.indices]
        start = time.perf_counter_ns() if config.timing else None
        logits, states = forward_eval(model, x, config.norm, states)
        elapsed = time.perf_counter_ns() - start if config.timing else None

        n_wrong = int(np.sum(predict(logits) != dataset.labels[batch.indices]))
        wrong += n_wrong
        seen += len(batch)

        domain = int(batch.domain_ids[0])
        reference = true_means[domain]
        bias = [
            float(np.linalg.norm(state.current_stats().mean - mu))
            for state, mu in zip(states, reference)
        ]

        trace.records.append(MetricsRecord(
            t=batch.t,
            scenario=config.scenario,
            norm_kind=config.norm,
            domain="mixed" if config.scenario == "mixed" else config.domains[domain],
            batch_size=len(batch),
            batch_error=n_wrong / len(batch),
            cumulative_error=wrong / seen,
            bias_l2=bias,
            wall_time_us=elapsed / 1000.0 if elapsed is not None else None,
        ))

    if verbose:
        print(f"Done. Cumulative error: {trace.final_error:.2%}")
    return trace
