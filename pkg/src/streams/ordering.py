"""
Temporally correlated (non-i.i.d.) orderings of a labeled test set.

The stream is cut into slots. Each slot draws class proportions from a
symmetric Dirichlet(delta) and is filled by sampling labels from those
proportions, taking samples of the drawn class without replacement. Small
delta concentrates each slot on few classes; large delta approaches a uniform
shuffle.
"""

import os

import numpy as np

from config.config_loader import get
from src.errors import FormatError

ORDER_HEADER = "unmix-order"


def dirichlet_proportions(delta: float, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    """
    One draw from a symmetric Dirichlet via normalized Gamma(delta, 1) draws.

    numpy's Gamma sampler is Marsaglia-Tsang rejection (with the boost for
    shape < 1). If every draw underflows to zero, which happens for tiny delta,
    all mass goes to one uniformly chosen class, the limit of the distribution.
    """
    g = rng.gamma(delta, 1.0, size=n_classes)
    total = g.sum()
    if total <= 0 or not np.isfinite(total):
        pi = np.zeros(n_classes)
        pi[rng.integers(n_classes)] = 1.0
        return pi
    return g / total


def dirichlet_order(labels, delta: float = None, slot_size: int = None, seed=0) -> np.ndarray:
    """
    Permutation of sample indices with Dirichlet label correlation.

    Args:
        labels: (N,) integer labels in [0, M)
        delta: Dirichlet concentration (default: stream.delta)
        slot_size: Samples per slot (default: stream.batch_size)
        seed: Integer seed or numpy Generator

    Returns:
        (N,) permutation of range(N)

    Raises:
        ValueError: if delta <= 0 or slot_size < 1
    """
    if delta is None:
        delta = get("streams", "stream.delta", 0.1)
    if slot_size is None:
        slot_size = get("streams", "stream.batch_size", 64)

    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if slot_size < 1:
        raise ValueError(f"slot_size must be >= 1, got {slot_size}")

    labels = np.asarray(labels)
    n = labels.shape[0]
    n_classes = int(labels.max()) + 1 if n else 0
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    # Per-class queues of shuffled sample indices
    pools = [rng.permutation(np.flatnonzero(labels == c)) for c in range(n_classes)]
    heads = [0] * n_classes

    order = np.empty(n, dtype=np.int64)
    filled = 0
    while filled < n:
        size = min(slot_size, n - filled)
        pi = dirichlet_proportions(delta, n_classes, rng)
        draws = rng.choice(n_classes, size=size, p=pi)

        for c in draws:
            if heads[c] >= len(pools[c]):
                # Class exhausted: fall back to the lowest label with samples left
                c = next(j for j in range(n_classes) if heads[j] < len(pools[j]))
            order[filled] = pools[c][heads[c]]
            heads[c] += 1
            filled += 1

    return order


def iid_order(n: int, seed=0) -> np.ndarray:
    """Uniform random permutation of range(n)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.permutation(n)


def slot_histograms(labels, order, slot_size: int, n_classes: int = None) -> np.ndarray:
    """(n_slots, M) class counts of consecutive slots of the ordered stream."""
    labels = np.asarray(labels)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    ordered = labels[np.asarray(order)]
    n_slots = -(-ordered.shape[0] // slot_size)
    hist = np.zeros((n_slots, n_classes), dtype=np.int64)
    for s in range(n_slots):
        hist[s] = np.bincount(ordered[s * slot_size:(s + 1) * slot_size], minlength=n_classes)
    return hist


def normalized_entropy(hist) -> np.ndarray:
    """Label entropy of each histogram row divided by log(M); 0 = one class, 1 = uniform."""
    hist = np.asarray(hist, dtype=np.float64)
    p = hist / hist.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=1) / np.log(hist.shape[1])


def tv_distance(hist, reference) -> np.ndarray:
    """Total-variation distance of each histogram row from a reference distribution."""
    hist = np.asarray(hist, dtype=np.float64)
    p = hist / hist.sum(axis=1, keepdims=True)
    q = np.asarray(reference, dtype=np.float64)
    q = q / q.sum()
    return 0.5 * np.abs(p - q[None, :]).sum(axis=1)


def save_order(order, path: str, meta: dict = None) -> str:
    """Write an ordering as one index per line under a versioned header."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    version = get("settings", "formats.artifact_version", 1)
    fields = " ".join(f"{k}={v}" for k, v in sorted((meta or {}).items()))
    header = f"{ORDER_HEADER} v{version} n={len(order)} {fields}".rstrip()
    np.savetxt(path, np.asarray(order, dtype=np.int64), fmt="%d", header=header)
    return path


def load_order(path: str) -> np.ndarray:
    """
    Read an ordering written by save_order.

    Raises:
        FormatError: if the header is missing or the version is unsupported
    """
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline()

    parts = header.lstrip("# ").split()
    if len(parts) < 2 or parts[0] != ORDER_HEADER:
        raise FormatError(f"{path} is not an {ORDER_HEADER} file")
    version = int(parts[1].lstrip("v"))
    if version != get("settings", "formats.artifact_version", 1):
        raise FormatError(f"Unsupported ordering version {version} in {path}")

    return np.loadtxt(path, dtype=np.int64, ndmin=1)
