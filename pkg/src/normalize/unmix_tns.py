"""
UnMix-TNS normalization layer.

The stored statistics of a BN layer are split into K (mean, variance)
components whose uniform mixture is the layer's current belief about the test
feature distribution. Every forward step:

    1. instance statistics of the batch
    2. cosine similarity of each instance mean with each component mean
    3. softmax assignment probabilities (temperature tau)
    4. per-instance blend of components and instance statistics, mixed into
       refined per-instance mean/variance
    5. normalization with the refined statistics
    6. momentum update of the components, weighted by the assignments

Steps 2-4 use the component means from before the update.
"""

from dataclasses import dataclass, replace

import numpy as np

from config.config_loader import get
from src.stats.core import (
    AssignmentMatrix,
    ChannelStats,
    InstanceStats,
    assignment_probs,
    cosine_sim_matrix,
    instance_stats,
    mixture_moments,
    momentum_lambda,
)
from .base import BaseNormalizer, SourceStats, check_channels, standardize


@dataclass
class UnMixState:
    """K components per channel plus the layer's fixed hyperparameters."""
    comp_mean: np.ndarray
    comp_var: np.ndarray
    k: int
    alpha: float
    tau: float
    lam: float
    eps: float

    def __post_init__(self):
        if self.comp_mean.ndim != 2 or self.comp_mean.shape != self.comp_var.shape:
            raise ValueError(
                f"comp_mean {self.comp_mean.shape} and comp_var {self.comp_var.shape} must both be (K, C)"
            )
        if self.comp_mean.shape[0] != self.k:
            raise ValueError(f"State holds {self.comp_mean.shape[0]} components, k={self.k}")
        if np.any(self.comp_var < 0):
            raise ValueError("comp_var must be nonnegative")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    @property
    def channels(self) -> int:
        return self.comp_mean.shape[1]

    def mixture(self) -> ChannelStats:
        """Moments of the uniform mixture of all components."""
        return mixture_moments(self.comp_mean, self.comp_var)


@dataclass
class RefinedStats:
    """Per-instance normalization statistics, each of shape (B, C)."""
    mean: np.ndarray
    var: np.ndarray


def init_unmix(
    src: SourceStats,
    k: int = None,
    alpha: float = None,
    seed=0,
    tau: float = None,
    lam: float = None,
    eps: float = None,
    batch_size: int = None,
) -> UnMixState:
    """
    Split stored statistics into K components.

    comp_mean[k, c] = mean[c] + std[c] * sqrt(alpha * K / (K - 1)) * zeta[k, c]
    comp_var[k, c]  = (1 - alpha) * var[c]

    with zeta standard normal. In expectation the uniform mixture of the
    components reproduces the stored mean and variance for every alpha.

    Args:
        src: Stored statistics of the layer
        k: Number of components (default: unmix.k)
        alpha: Component-mean spread in [0, 1) (default: unmix.alpha); must be 0 when k == 1
        seed: Integer seed or numpy Generator for zeta
        tau: Assignment temperature (default: unmix.tau)
        lam: Update momentum (default: momentum_lambda(batch_size))
        eps: Normalization epsilon (default: eps)
        batch_size: Used for the default lam (default: momentum.b0, i.e. lam = lambda0)

    Raises:
        ValueError: k < 1, alpha outside [0, 1), or alpha > 0 with k == 1
    """
    if k is None:
        k = get("normalizers", "unmix.k", 16)
    if alpha is None:
        alpha = get("normalizers", "unmix.alpha", 0.5)
    if tau is None:
        tau = get("normalizers", "unmix.tau", 0.07)
    if eps is None:
        eps = get("normalizers", "eps", 1e-6)
    if lam is None:
        if batch_size is None:
            batch_size = get("normalizers", "momentum.b0", 64)
        lam = momentum_lambda(batch_size)

    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if k == 1 and alpha > 0:
        raise ValueError(f"k=1 requires alpha=0 (got alpha={alpha}): a single component cannot spread")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    zeta = rng.standard_normal((k, src.channels))

    spread = np.sqrt(alpha * k / (k - 1)) if k > 1 else 0.0
    comp_mean = src.mean[None, :] + np.sqrt(src.var)[None, :] * spread * zeta
    comp_var = np.tile((1.0 - alpha) * src.var, (k, 1))

    return UnMixState(
        comp_mean=comp_mean,
        comp_var=comp_var,
        k=int(k),
        alpha=float(alpha),
        tau=float(tau),
        lam=float(lam),
        eps=float(eps),
    )


def refine_stats(state: UnMixState, inst: InstanceStats) -> tuple[RefinedStats, AssignmentMatrix]:
    """
    Refined per-instance statistics and the assignments that produced them.

    Each instance is blended into every component with its assignment
    probability, and the K blends are composed as a uniform mixture.
    Does not modify the state.
    """
    sims = cosine_sim_matrix(inst.mean, state.comp_mean)
    assign = assignment_probs(sims, state.tau)

    p = assign.probs[:, :, None]                                          # (B, K, 1)
    hat_mean = (1.0 - p) * state.comp_mean[None] + p * inst.mean[:, None, :]  # (B, K, C)
    hat_var = (1.0 - p) * state.comp_var[None] + p * inst.var[:, None, :]

    mean = hat_mean.mean(axis=1)
    var = (hat_var + (hat_mean - mean[:, None, :]) ** 2).mean(axis=1)
    return RefinedStats(mean=mean, var=var), assign


def update_components(state: UnMixState, inst: InstanceStats, assign: AssignmentMatrix) -> UnMixState:
    """
    Move every component towards the instances assigned to it.

    m_k += (lam / B) * sum_b p[b, k] * (inst_mean_b - m_k), same for variances,
    with variances clamped at zero.
    """
    p = assign.probs
    step = state.lam / p.shape[0]
    mass = p.sum(axis=0)[:, None]                                         # (K, 1)

    comp_mean = state.comp_mean + step * (p.T @ inst.mean - mass * state.comp_mean)
    comp_var = state.comp_var + step * (p.T @ inst.var - mass * state.comp_var)
    return replace(state, comp_mean=comp_mean, comp_var=np.maximum(comp_var, 0.0))


def unmix_forward(state: UnMixState, batch, gamma, beta) -> tuple[np.ndarray, UnMixState]:
    """
    Normalize a batch with UnMix-TNS and return the updated state.

    Raises:
        StateMismatchError: if the batch channel count differs from the state's
    """
    z = check_channels(batch, state.channels, "UnMix-TNS state")
    inst = instance_stats(z)
    refined, assign = refine_stats(state, inst)
    out = standardize(z, refined.mean, refined.var, gamma, beta, state.eps)
    return out, update_components(state, inst, assign)


class UnMixTNS(BaseNormalizer):
    """UnMix-TNS layer; reset() restores the seeded initial components."""

    kind = "unmix_tns"
    label = "UnMix-TNS"
    stateful = True

    def __init__(
        self,
        src: SourceStats,
        k: int = None,
        alpha: float = None,
        tau: float = None,
        batch_size: int = None,
        lam: float = None,
        eps: float = None,
        seed=0,
    ):
        super().__init__(src, eps)
        self.state = init_unmix(
            src, k=k, alpha=alpha, seed=seed, tau=tau, lam=lam, eps=self.eps, batch_size=batch_size
        )
        self._initial = self.state

    def forward(self, batch: np.ndarray) -> np.ndarray:
        out, self.state = unmix_forward(self.state, batch, self.src.gamma, self.src.beta)
        return out

    def current_stats(self) -> ChannelStats:
        return self.state.mixture()

    def reset(self):
        self.state = self._initial
