"""
Assembly of the online test stream: ordering, batching and per-sample domains.
"""

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config.config_loader import get
from .ordering import dirichlet_order, iid_order
from .schedule import reset_points, schedule_domains


class StreamConfig(BaseModel):
    """How the test set is ordered, batched and assigned to domains."""

    model_config = ConfigDict(extra="forbid")

    delta: float = Field(default_factory=lambda: get("streams", "stream.delta", 0.1), gt=0)
    batch_size: int = Field(default_factory=lambda: get("streams", "stream.batch_size", 64), ge=1)
    slot_size: Optional[int] = Field(default_factory=lambda: get("streams", "stream.slot_size"), ge=1)
    scenario: Literal["single", "continual", "mixed"] = Field(
        default_factory=lambda: get("streams", "stream.scenario", "continual")
    )
    order: Literal["dirichlet", "iid"] = Field(default_factory=lambda: get("streams", "stream.order", "dirichlet"))
    domains: list[str] = Field(
        default_factory=lambda: list(get("streams", "default_domains", ["shifted"])), min_length=1
    )
    seed: int = 0

    @property
    def effective_slot_size(self) -> int:
        """Slot size, defaulting to the batch size."""
        return self.slot_size if self.slot_size is not None else self.batch_size


@dataclass
class StreamBatch:
    """One step of the online stream."""
    t: int
    indices: np.ndarray
    domain_ids: np.ndarray
    reset: bool = False

    def __len__(self) -> int:
        return self.indices.shape[0]


def _ordering(labels: np.ndarray, cfg: StreamConfig, seed_seq: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(seed_seq)
    if cfg.order == "iid":
        return iid_order(labels.shape[0], rng)
    return dirichlet_order(labels, cfg.delta, cfg.effective_slot_size, rng)


def build_stream(labels, cfg: StreamConfig) -> list[StreamBatch]:
    """
    Build the full online stream over a labeled test set.

    single/continual: the test set is streamed once per domain, in domain order,
    each pass with its own ordering; batches never straddle two domains.
    mixed: one ordering over (domain copies x samples); every sample draws its
    own domain.

    Returns:
        StreamBatch list; indices point into the test set, domain_ids into cfg.domains
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    n_domains = len(cfg.domains)
    b = cfg.batch_size
    seeds = np.random.SeedSequence(cfg.seed).spawn(n_domains + 2)

    if cfg.scenario == "mixed":
        order = _ordering(np.tile(labels, n_domains), cfg, seeds[0]) % n
        chunks = [order[s:s + b] for s in range(0, order.shape[0], b)]
        assignments = schedule_domains("mixed", cfg.domains, len(chunks), np.random.default_rng(seeds[1]), b)
    else:
        chunks = []
        for d in range(n_domains):
            order = _ordering(labels, cfg, seeds[2 + d])
            chunks.extend(order[s:s + b] for s in range(0, n, b))
        assignments = schedule_domains(cfg.scenario, cfg.domains, len(chunks), batch_size=b)

    resets = reset_points(cfg.scenario, assignments)
    return [
        StreamBatch(t=t, indices=idx, domain_ids=a[:idx.shape[0]], reset=r)
        for t, (idx, a, r) in enumerate(zip(chunks, assignments, resets))
    ]
