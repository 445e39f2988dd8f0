"""
Parametric domain shifts applied to raw inputs.

x' = scale * x + offset + noise_std * eta, eta ~ N(0, 1), with scale and
offset per input channel. Stand-ins for corruption types.
"""

from dataclasses import dataclass

import numpy as np

from config.config_loader import get


@dataclass
class DomainShift:
    """One target domain."""
    id: str
    scale: np.ndarray
    offset: np.ndarray
    noise_std: float = 0.0

    def __post_init__(self):
        self.scale = np.asarray(self.scale, dtype=np.float64).reshape(-1)
        self.offset = np.asarray(self.offset, dtype=np.float64).reshape(-1)
        if self.scale.shape != self.offset.shape:
            raise ValueError(f"Domain '{self.id}': scale {self.scale.shape} and offset {self.offset.shape} differ")
        if np.any(self.scale <= 0):
            raise ValueError(f"Domain '{self.id}': scale must be positive")
        if self.noise_std < 0:
            raise ValueError(f"Domain '{self.id}': noise_std must be nonnegative")

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.scale == 1.0) and np.all(self.offset == 0.0) and self.noise_std == 0.0)

    @classmethod
    def identity(cls, channels: int, id: str = "clean") -> "DomainShift":
        return cls(id=id, scale=np.ones(channels), offset=np.zeros(channels), noise_std=0.0)

    @classmethod
    def from_config(cls, entry: dict, channels: int) -> "DomainShift":
        """Build from a config entry; scalar scale/offset are broadcast to all channels."""
        scale = np.broadcast_to(np.asarray(entry.get("scale", 1.0), dtype=np.float64), (channels,))
        offset = np.broadcast_to(np.asarray(entry.get("offset", 0.0), dtype=np.float64), (channels,))
        return cls(
            id=str(entry["id"]),
            scale=scale.copy(),
            offset=offset.copy(),
            noise_std=float(entry.get("noise_std", 0.0)),
        )


def apply_shift(x, shift: DomainShift, seed=0) -> np.ndarray:
    """
    Apply a domain shift to inputs of shape (N, C0, L0).

    The identity shift returns an unchanged copy of x.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != shift.scale.shape[0]:
        raise ValueError(f"Inputs have {x.shape[1]} channels, domain '{shift.id}' has {shift.scale.shape[0]}")

    if shift.is_identity:
        return x.copy()

    out = x * shift.scale[None, :, None] + shift.offset[None, :, None]
    if shift.noise_std > 0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        out = out + shift.noise_std * rng.standard_normal(x.shape)
    return out


def load_domains(ids: list[str] = None, channels: int = None) -> list[DomainShift]:
    """
    Domain shifts from config/streams.yaml, in the order given.

    Args:
        ids: Domain ids (default: default_domains)
        channels: Input channels (default: dataset.input_channels)

    Raises:
        ValueError: if an id is not defined in the config
    """
    if ids is None:
        ids = get("streams", "default_domains", ["shifted"])
    if channels is None:
        channels = get("streams", "dataset.input_channels", 8)

    entries = {e["id"]: e for e in get("streams", "domains", [])}
    missing = [i for i in ids if i not in entries]
    if missing:
        raise ValueError(f"Unknown domain(s): {', '.join(missing)}. Defined: {', '.join(entries)}")

    return [DomainShift.from_config(entries[i], channels) for i in ids]
