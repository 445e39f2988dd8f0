"""
EMA-BN: global test statistics tracked by an exponential moving average.

A plain stand-in for robust BN without a memory bank.
"""

from dataclasses import dataclass, replace

import numpy as np

from config.config_loader import get
from src.stats.core import ChannelStats, batch_stats
from .base import BaseNormalizer, SourceStats, check_channels, standardize


@dataclass
class EmaState:
    """Running mean/variance and the rate they move towards each batch."""
    mean: np.ndarray
    var: np.ndarray
    momentum: float

    def __post_init__(self):
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError(f"EMA momentum must lie in [0, 1], got {self.momentum}")

    @classmethod
    def from_source(cls, src: SourceStats, momentum: float = None) -> "EmaState":
        if momentum is None:
            momentum = get("normalizers", "ema_bn.momentum", 0.1)
        return cls(mean=src.mean.copy(), var=src.var.copy(), momentum=momentum)


def ema_bn_forward(state: EmaState, batch, gamma, beta, eps: float = None) -> tuple[np.ndarray, EmaState]:
    """
    Normalize with the current EMA statistics, then move them towards the batch.

    Returns:
        (normalized batch, updated state); the input state is not modified
    """
    z = check_channels(batch, state.mean.shape[0], "EMA state")
    out = standardize(z, state.mean, state.var, gamma, beta, eps)

    current = batch_stats(z)
    m = state.momentum
    new_state = replace(
        state,
        mean=(1.0 - m) * state.mean + m * current.mean,
        var=(1.0 - m) * state.var + m * current.var,
    )
    return out, new_state


class EmaBN(BaseNormalizer):
    """EMA of batch statistics, initialized from the source statistics."""

    kind = "ema_bn"
    label = "EMA-BN"
    stateful = True

    def __init__(self, src: SourceStats, momentum: float = None, eps: float = None):
        super().__init__(src, eps)
        self.state = EmaState.from_source(src, momentum)
        self._initial = self.state

    def forward(self, batch: np.ndarray) -> np.ndarray:
        out, self.state = ema_bn_forward(self.state, batch, self.src.gamma, self.src.beta, self.eps)
        return out

    def current_stats(self) -> ChannelStats:
        return ChannelStats(mean=self.state.mean, var=self.state.var)

    def reset(self):
        self.state = self._initial
