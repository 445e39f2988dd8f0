"""
Statistics primitives shared by all normalizers.

Per-instance and per-batch moments, mixture-moment composition, cosine
similarity, assignment softmax and the momentum schedule. Everything here is a
pure function of its inputs.

Feature batches are float64 arrays of shape (B, C, L). Variances are population
variances (divisor L or B*L) and are what gets stored and propagated; standard
deviations only appear at the normalization point.
"""

from dataclasses import dataclass

import numpy as np

from config.config_loader import get

# Norms below this are treated as zero vectors by the cosine similarity
NORM_FLOOR = 1e-12

# Tolerance for probability vectors summing to one
SUM_TOL = 1e-9


@dataclass
class ChannelStats:
    """Per-channel mean and variance, each of length C."""
    mean: np.ndarray
    var: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)


@dataclass
class InstanceStats:
    """Per-instance, per-channel mean and variance, each of shape (B, C)."""
    mean: np.ndarray
    var: np.ndarray


@dataclass
class AssignmentMatrix:
    """Assignment probabilities of B instances over K components; rows sum to 1."""
    probs: np.ndarray


def check_batch(batch) -> np.ndarray:
    """
    Validate a feature batch and return it as a float64 array.

    Raises:
        ValueError: if the batch is not 3-D, has an empty axis, or holds non-finite values
    """
    z = np.asarray(batch, dtype=np.float64)
    if z.ndim != 3:
        raise ValueError(f"Feature batch must have shape (B, C, L), got {z.shape}")
    if min(z.shape) < 1:
        raise ValueError(f"Feature batch axes must be non-empty, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("Feature batch contains non-finite values")
    return z


def instance_stats(batch) -> InstanceStats:
    """
    Mean and population variance of every (instance, channel) over the spatial axis.

    L=1 yields zero variance; the normalization epsilon handles it downstream.
    """
    z = check_batch(batch)
    mean = z.mean(axis=2)
    var = ((z - mean[:, :, None]) ** 2).mean(axis=2)
    return InstanceStats(mean=mean, var=var)


def batch_stats(batch) -> ChannelStats:
    """Mean and population variance of every channel over batch and spatial axes."""
    z = check_batch(batch)
    mean = z.mean(axis=(0, 2))
    var = ((z - mean[None, :, None]) ** 2).mean(axis=(0, 2))
    return ChannelStats(mean=mean, var=var)


def mixture_moments(means, variances, weights=None) -> ChannelStats:
    """
    Mean and variance of a weighted mixture of per-channel components.

    Args:
        means: (K, C) component means
        variances: (K, C) component variances, nonnegative
        weights: length-K nonnegative weights summing to 1 (None = uniform 1/K)

    Returns:
        ChannelStats of the mixture. The variance is computed in the law of total
        variance form sum_k w_k * (var_k + (mean_k - mean)^2), which is never negative.

    Raises:
        ValueError: on shape mismatch, negative weights or variances, or weights
            not summing to 1
    """
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    variances = np.atleast_2d(np.asarray(variances, dtype=np.float64))

    if means.shape != variances.shape:
        raise ValueError(f"means {means.shape} and variances {variances.shape} must match")
    if np.any(variances < 0):
        raise ValueError("Component variances must be nonnegative")

    k = means.shape[0]
    if weights is None:
        w = np.full(k, 1.0 / k)
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != k:
            raise ValueError(f"Expected {k} weights, got {w.shape[0]}")
        if np.any(w < 0):
            raise ValueError("Mixture weights must be nonnegative")
        if abs(w.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"Mixture weights must sum to 1, got {w.sum():.12g}")

    mean = w @ means
    var = w @ (variances + (means - mean) ** 2)
    return ChannelStats(mean=mean, var=var)


def cosine_sim(u, v) -> float:
    """
    Cosine similarity of two vectors; 0.0 when either norm is below NORM_FLOOR.
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < NORM_FLOOR or nv < NORM_FLOOR:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def cosine_sim_matrix(rows, cols) -> np.ndarray:
    """
    Pairwise cosine similarities between the rows of two matrices.

    Args:
        rows: (B, C) matrix, e.g. instance means
        cols: (K, C) matrix, e.g. component means

    Returns:
        (B, K) similarities; pairs involving a near-zero vector get 0.0
    """
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)

    row_norms = np.linalg.norm(rows, axis=1)
    col_norms = np.linalg.norm(cols, axis=1)
    row_ok = row_norms >= NORM_FLOOR
    col_ok = col_norms >= NORM_FLOOR

    safe_rows = rows / np.where(row_ok, row_norms, 1.0)[:, None]
    safe_cols = cols / np.where(col_ok, col_norms, 1.0)[:, None]

    sims = safe_rows @ safe_cols.T
    sims[~row_ok, :] = 0.0
    sims[:, ~col_ok] = 0.0
    return np.clip(sims, -1.0, 1.0)


def assignment_probs(sims, tau: float = None) -> AssignmentMatrix:
    """
    Row-wise softmax of sims / tau with max subtraction.

    Args:
        sims: (B, K) similarity scores
        tau: Temperature (default: unmix.tau from config)

    Raises:
        ValueError: if tau is not positive
    """
    if tau is None:
        tau = get("normalizers", "unmix.tau", 0.07)
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")

    logits = np.atleast_2d(np.asarray(sims, dtype=np.float64)) / tau
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return AssignmentMatrix(probs=e / e.sum(axis=1, keepdims=True))


def momentum_lambda(batch_size: int, b0: int = None, lambda0: float = None) -> float:
    """
    Batch-size dependent momentum: 1 - (1 - lambda0) ** (batch_size / b0).

    Equalizes the statistical noise of the component updates across batch
    sizes; returns exactly lambda0 when batch_size == b0.

    Raises:
        ValueError: if batch_size or b0 is below 1, or lambda0 is outside (0, 1)
    """
    if b0 is None:
        b0 = get("normalizers", "momentum.b0", 64)
    if lambda0 is None:
        lambda0 = get("normalizers", "momentum.lambda0", 0.1)

    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if b0 < 1:
        raise ValueError(f"b0 must be >= 1, got {b0}")
    if not 0.0 < lambda0 < 1.0:
        raise ValueError(f"lambda0 must lie in (0, 1), got {lambda0}")

    if batch_size == b0:
        return float(lambda0)
    return float(-np.expm1((batch_size / b0) * np.log1p(-lambda0)))
