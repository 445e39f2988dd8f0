"""
Batch-normalization baselines: stored statistics, test-batch statistics, and
their convex blend.
"""

import numpy as np

from config.config_loader import get
from src.stats.core import ChannelStats, batch_stats, check_batch
from .base import BaseNormalizer, SourceStats, check_channels, standardize


def source_bn_forward(batch, src: SourceStats, eps: float = None) -> np.ndarray:
    """Normalize with the stored source mean/variance."""
    z = check_channels(batch, src.channels, "source statistics")
    return standardize(z, src.mean, src.var, src.gamma, src.beta, eps)


def tbn_forward(batch, gamma, beta, eps: float = None) -> np.ndarray:
    """
    Normalize with the statistics of the current batch.

    With B=1 this is instance normalization over the spatial axis.
    """
    z = check_batch(batch)
    stats = batch_stats(z)
    return standardize(z, stats.mean, stats.var, gamma, beta, eps)


def blend_stats(src: SourceStats, current: ChannelStats, alpha_bn: float) -> ChannelStats:
    """(1 - alpha_bn) * source + alpha_bn * current, for mean and variance alike."""
    return ChannelStats(
        mean=(1.0 - alpha_bn) * src.mean + alpha_bn * current.mean,
        var=(1.0 - alpha_bn) * src.var + alpha_bn * current.var,
    )


def alpha_bn_forward(batch, src: SourceStats, alpha_bn: float = None, eps: float = None) -> np.ndarray:
    """
    Normalize with a fixed convex blend of source and current-batch statistics.

    Raises:
        ValueError: if alpha_bn is outside [0, 1]
    """
    if alpha_bn is None:
        alpha_bn = get("normalizers", "alpha_bn.alpha", 0.5)
    if not 0.0 <= alpha_bn <= 1.0:
        raise ValueError(f"alpha_bn must lie in [0, 1], got {alpha_bn}")

    z = check_channels(batch, src.channels, "source statistics")
    if alpha_bn == 0.0:
        return standardize(z, src.mean, src.var, src.gamma, src.beta, eps)

    stats = batch_stats(z)
    if alpha_bn == 1.0:
        return standardize(z, stats.mean, stats.var, src.gamma, src.beta, eps)

    mixed = blend_stats(src, stats, alpha_bn)
    return standardize(z, mixed.mean, mixed.var, src.gamma, src.beta, eps)


class SourceBN(BaseNormalizer):
    """Frozen source statistics."""

    kind = "source_bn"
    label = "Source"

    def forward(self, batch: np.ndarray) -> np.ndarray:
        return source_bn_forward(batch, self.src, self.eps)

    def current_stats(self) -> ChannelStats:
        return ChannelStats(mean=self.src.mean.copy(), var=self.src.var.copy())


class TBN(BaseNormalizer):
    """Test-time BN: statistics of each incoming batch."""

    kind = "tbn"
    label = "TBN"

    def __init__(self, src: SourceStats, eps: float = None):
        super().__init__(src, eps)
        self._last = None

    def forward(self, batch: np.ndarray) -> np.ndarray:
        z = check_channels(batch, self.src.channels)
        self._last = batch_stats(z)
        return standardize(z, self._last.mean, self._last.var, self.src.gamma, self.src.beta, self.eps)

    def current_stats(self) -> ChannelStats:
        # Before the first batch the layer has no estimate; report the stored one
        if self._last is None:
            return ChannelStats(mean=self.src.mean.copy(), var=self.src.var.copy())
        return self._last

    def reset(self):
        self._last = None


class AlphaBN(BaseNormalizer):
    """Fixed blend of source and test-batch statistics."""

    kind = "alpha_bn"
    label = "alpha-BN"

    def __init__(self, src: SourceStats, alpha_bn: float = None, eps: float = None):
        super().__init__(src, eps)
        if alpha_bn is None:
            alpha_bn = get("normalizers", "alpha_bn.alpha", 0.5)
        if not 0.0 <= alpha_bn <= 1.0:
            raise ValueError(f"alpha_bn must lie in [0, 1], got {alpha_bn}")
        self.alpha_bn = alpha_bn
        self._last = None

    def forward(self, batch: np.ndarray) -> np.ndarray:
        z = check_channels(batch, self.src.channels)
        self._last = blend_stats(self.src, batch_stats(z), self.alpha_bn)
        return standardize(z, self._last.mean, self._last.var, self.src.gamma, self.src.beta, self.eps)

    def current_stats(self) -> ChannelStats:
        if self._last is None:
            return ChannelStats(mean=self.src.mean.copy(), var=self.src.var.copy())
        return self._last

    def reset(self):
        self._last = None
