from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from config.config_loader import get
from src.stats.core import ChannelStats, check_batch


class StateMismatchError(ValueError):
    """Normalizer state does not fit the batch or the requested kind."""


@dataclass
class SourceStats:
    """Stored statistics and affine parameters of one normalization layer."""
    mean: np.ndarray
    var: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.var = np.asarray(self.var, dtype=np.float64)
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)

        c = self.mean.shape[0]
        for name in ("var", "gamma", "beta"):
            if getattr(self, name).shape != (c,):
                raise ValueError(f"SourceStats.{name} must have shape ({c},), got {getattr(self, name).shape}")
        if np.any(self.var < 0):
            raise ValueError("SourceStats.var must be nonnegative")
        for name in ("mean", "var", "gamma", "beta"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"SourceStats.{name} contains non-finite values")

    @property
    def channels(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def identity(cls, channels: int) -> "SourceStats":
        """Zero mean, unit variance, gamma=1, beta=0."""
        return cls(
            mean=np.zeros(channels),
            var=np.ones(channels),
            gamma=np.ones(channels),
            beta=np.zeros(channels),
        )


def standardize(batch: np.ndarray, mean, var, gamma, beta, eps: float = None) -> np.ndarray:
    """
    gamma * (z - mean) / sqrt(var + eps) + beta.

    mean/var are either per-channel (C,) or per-instance (B, C).
    """
    if eps is None:
        eps = get("normalizers", "eps", 1e-6)

    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if mean.ndim == 1:
        mean = mean[None, :]
        var = var[None, :]

    inv_std = 1.0 / np.sqrt(var + eps)
    scale = np.asarray(gamma, dtype=np.float64)[None, :] * inv_std
    return (batch - mean[:, :, None]) * scale[:, :, None] + np.asarray(beta, dtype=np.float64)[None, :, None]


def check_channels(batch: np.ndarray, channels: int, what: str = "normalizer") -> np.ndarray:
    """Validate a batch and make sure its channel count matches."""
    z = check_batch(batch)
    if z.shape[1] != channels:
        raise StateMismatchError(f"Batch has {z.shape[1]} channels, {what} expects {channels}")
    return z


class BaseNormalizer(ABC):
    """Base class for all test-time normalization layers."""

    kind: str = ""
    label: str = ""
    stateful: bool = False

    def __init__(self, src: SourceStats, eps: float = None):
        self.src = src
        self.eps = eps if eps is not None else get("normalizers", "eps", 1e-6)

    @abstractmethod
    def forward(self, batch: np.ndarray) -> np.ndarray:
        """Normalize a (B, C, L) batch; stateful layers update themselves."""
        pass

    @abstractmethod
    def current_stats(self) -> ChannelStats:
        """Statistics this layer currently uses as its estimate of the test mean/variance."""
        pass

    def reset(self):
        """Return to the initial state. Stateless layers have nothing to reset."""
        pass

    def __repr__(self) -> str:
        return f"{type(self).__name__}(kind={self.kind!r}, channels={self.src.channels})"
