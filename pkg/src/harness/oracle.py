"""
Ground-truth statistics and bias measurement.

compute_true_stats gives the reference mean mu* entering every normalization
slot of a model for a given dataset. The controlled bias study draws features
directly from K' known Gaussian components under a piecewise-constant
schedule h^t(k), where the expected test-time BN bias has the closed form
mu* - sum_k h^t(k) mu*_k.
"""

from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from config.config_loader import get
from src.normalize.base import SourceStats, standardize
from src.normalize.unmix_tns import UnMixTNS
from src.stats.core import ChannelStats, batch_stats, check_batch, mixture_moments
from src.streams.ordering import dirichlet_proportions
from src.toynet.model import ToyModel, affine

SCHEDULE_TOL = 1e-9


def compute_true_stats(model: ToyModel, samples) -> list[ChannelStats]:
    """
    Exact per-channel moments of the features entering each normalization slot.

    One frozen pass over the whole dataset in which every slot normalizes with
    the moments of the full dataset, so each slot sees what an ideal
    label-marginalized estimator would give it. Order of samples is irrelevant.
    """
    a = check_batch(samples)
    stats = []
    for block in model.blocks:
        h = affine(a, block.weight, block.bias)
        s = batch_stats(h)
        stats.append(s)
        a = np.maximum(standardize(h, s.mean, s.var, block.norm.gamma, block.norm.beta), 0.0)
    return stats


@dataclass
class BiasOracle:
    """
    True means for a component-labeled feature stream.

    true_mean: per-layer (C,) reference means mu*
    component_means: per-layer (K', C) component means mu*_k
    schedule: (T, K') weights h^t(k); every row sums to 1
    """
    true_mean: list[np.ndarray]
    component_means: list[np.ndarray]
    schedule: np.ndarray
    component_std: float = 1.0

    def __post_init__(self):
        self.schedule = np.asarray(self.schedule, dtype=np.float64)
        if self.schedule.ndim != 2:
            raise ValueError(f"schedule must be (T, K'), got shape {self.schedule.shape}")
        if np.any(self.schedule < 0) or np.any(np.abs(self.schedule.sum(axis=1) - 1.0) > SCHEDULE_TOL):
            raise ValueError("schedule rows must be nonnegative and sum to 1")
        if len(self.true_mean) != len(self.component_means):
            raise ValueError("true_mean and component_means must list the same layers")
        for mu, comps in zip(self.true_mean, self.component_means):
            if comps.shape != (self.schedule.shape[1], mu.shape[0]):
                raise ValueError(
                    f"component_means {comps.shape} must be (K'={self.schedule.shape[1]}, C={mu.shape[0]})"
                )

    @property
    def steps(self) -> int:
        return self.schedule.shape[0]

    @property
    def n_components(self) -> int:
        return self.schedule.shape[1]


def tbn_bias_closed_form(oracle: BiasOracle, t: int) -> list[np.ndarray]:
    """Expected test-time BN bias at step t, per layer: mu* - sum_k h^t(k) mu*_k."""
    if not 0 <= t < oracle.steps:
        raise ValueError(f"t must lie in [0, {oracle.steps}), got {t}")
    h = oracle.schedule[t]
    return [mu - h @ comps for mu, comps in zip(oracle.true_mean, oracle.component_means)]


def piecewise_schedule(n_components: int, steps: int, segment: int, delta: float = None,
                       seed=0, uniform: bool = False) -> np.ndarray:
    """
    (steps, K') schedule that is constant over segments of `segment` steps.

    Each segment's weights are one Dirichlet(delta) draw, or 1/K' when uniform.
    """
    if delta is None:
        delta = get("harness", "bias_study.delta", 0.1)
    if segment < 1:
        raise ValueError(f"segment must be >= 1, got {segment}")

    if uniform:
        return np.full((steps, n_components), 1.0 / n_components)

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_segments = -(-steps // segment)
    rows = [dirichlet_proportions(delta, n_components, rng) for _ in range(n_segments)]
    return np.repeat(np.array(rows), segment, axis=0)[:steps]


def make_oracle(schedule: np.ndarray, channels: int = None, mean_scale: float = None,
                component_std: float = None, seed=0) -> BiasOracle:
    """
    Single-layer oracle with K' random component means.

    mu* is the uniform average of the component means: the components are
    equally likely over the whole stream.
    """
    if channels is None:
        channels = get("harness", "bias_study.channels", 8)
    if mean_scale is None:
        mean_scale = get("harness", "bias_study.mean_scale", 2.0)
    if component_std is None:
        component_std = get("harness", "bias_study.component_std", 1.0)

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    comps = mean_scale * rng.standard_normal((schedule.shape[1], channels))
    return BiasOracle(
        true_mean=[comps.mean(axis=0)],
        component_means=[comps],
        schedule=schedule,
        component_std=float(component_std),
    )


def draw_features(oracle: BiasOracle, t: int, batch_size: int, spatial: int,
                  rng: np.random.Generator, layer: int = 0) -> np.ndarray:
    """(B, C, L) features whose component labels are drawn from h^t."""
    comps = oracle.component_means[layer]
    labels = rng.choice(oracle.n_components, size=batch_size, p=oracle.schedule[t])
    noise = rng.standard_normal((batch_size, comps.shape[1], spatial))
    return comps[labels][:, :, None] + oracle.component_std * noise


@dataclass
class BiasStudyResult:
    """Per-step bias vectors of the controlled study, each (T, C)."""
    schedule: np.ndarray
    closed_form: np.ndarray
    tbn_mean: np.ndarray
    tbn_se: np.ndarray
    unmix_mean: np.ndarray
    unmix_se: np.ndarray
    settings: dict = field(default_factory=dict)

    @property
    def z_scores(self) -> np.ndarray:
        """(measured TBN bias - closed form) / standard error."""
        return (self.tbn_mean - self.closed_form) / np.maximum(self.tbn_se, 1e-300)

    def records(self) -> list[dict]:
        """One JSON-ready row per step."""
        rows = []
        for t in range(self.schedule.shape[0]):
            rows.append({
                "t": t,
                "h": self.schedule[t].tolist(),
                "closed_form_l2": float(np.linalg.norm(self.closed_form[t])),
                "tbn_bias_l2": float(np.linalg.norm(self.tbn_mean[t])),
                "unmix_bias_l2": float(np.linalg.norm(self.unmix_mean[t])),
                "closed_form": self.closed_form[t].tolist(),
                "tbn_bias": self.tbn_mean[t].tolist(),
                "tbn_se": self.tbn_se[t].tolist(),
                "unmix_bias": self.unmix_mean[t].tolist(),
            })
        return rows


def run_bias_study(
    oracle: BiasOracle = None,
    batch_size: int = None,
    repeats: int = None,
    spatial: int = None,
    seed: int = 0,
    k: int = None,
    alpha: float = None,
    tau: float = None,
    verbose: bool = False,
) -> BiasStudyResult:
    """
    Measure test-time BN and UnMix-TNS bias on a component-labeled stream.

    For every repeat the whole stream is replayed with fresh draws; the TBN
    bias of step t is mu* minus the batch mean, the UnMix-TNS bias is mu* minus
    the mixture mean of a layer initialized from the marginal moments and fed
    the same batches.

    Args:
        oracle: Stream definition (default: make_oracle over a piecewise
            Dirichlet schedule from config/harness.yaml)
        batch_size: Samples per step (default: bias_study.batch_size)
        repeats: Independent replays for standard errors (default: bias_study.repeats)
        spatial: Spatial extent of each sample (default: bias_study.spatial)
        seed: Seed for oracle construction and all draws
        k, alpha, tau: UnMix-TNS hyperparameters (default: config/normalizers.yaml)
        verbose: Show progress
    """
    if batch_size is None:
        batch_size = get("harness", "bias_study.batch_size", 64)
    if repeats is None:
        repeats = get("harness", "bias_study.repeats", 64)
    if spatial is None:
        spatial = get("harness", "bias_study.spatial", 4)
    if repeats < 2:
        raise ValueError(f"repeats must be >= 2 for standard errors, got {repeats}")

    seeds = np.random.SeedSequence(seed).spawn(repeats + 2)
    if oracle is None:
        schedule = piecewise_schedule(
            get("harness", "bias_study.components", 4),
            get("harness", "bias_study.steps", 200),
            get("harness", "bias_study.segment", 20),
            seed=np.random.default_rng(seeds[0]),
        )
        oracle = make_oracle(schedule, seed=np.random.default_rng(seeds[1]))

    mu = oracle.true_mean[0]
    comps = oracle.component_means[0]
    marginal = mixture_moments(comps, np.full(comps.shape, oracle.component_std ** 2))
    src = SourceStats(mean=marginal.mean, var=marginal.var, gamma=np.ones(mu.shape[0]), beta=np.zeros(mu.shape[0]))

    steps, channels = oracle.steps, mu.shape[0]
    tbn = np.empty((repeats, steps, channels))
    unmix = np.empty((repeats, steps, channels))

    for r in tqdm(range(repeats), desc="Bias study", unit="run", disable=not verbose):
        rng = np.random.default_rng(seeds[r + 2])
        layer = UnMixTNS(src, k=k, alpha=alpha, tau=tau, batch_size=batch_size, seed=rng)
        for t in range(steps):
            x = draw_features(oracle, t, batch_size, spatial, rng)
            tbn[r, t] = mu - batch_stats(x).mean
            layer.forward(x)
            unmix[r, t] = mu - layer.current_stats().mean

    closed = np.array([tbn_bias_closed_form(oracle, t)[0] for t in range(steps)])
    scale = 1.0 / np.sqrt(repeats)
    return BiasStudyResult(
        schedule=oracle.schedule,
        closed_form=closed,
        tbn_mean=tbn.mean(axis=0),
        tbn_se=tbn.std(axis=0, ddof=1) * scale,
        unmix_mean=unmix.mean(axis=0),
        unmix_se=unmix.std(axis=0, ddof=1) * scale,
        settings={
            "batch_size": batch_size,
            "repeats": repeats,
            "spatial": spatial,
            "seed": seed,
            "components": oracle.n_components,
            "steps": steps,
            "channels": channels,
        },
    )
