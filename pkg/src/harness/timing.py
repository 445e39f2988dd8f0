"""
Per-batch wall time of UnMix-TNS against test-time BN.
"""

import time

import numpy as np

from config.config_loader import get
from src.normalize.base import SourceStats
from src.normalize.batch_norm import tbn_forward
from src.normalize.unmix_tns import init_unmix, unmix_forward


def _median_ns(fn, warmup: int, repeats: int) -> float:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        start = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - start)
    return float(np.median(samples))


def overhead(
    k: int = None,
    batch_shape: tuple[int, int, int] = None,
    warmup: int = None,
    repeats: int = None,
    seed: int = 0,
) -> dict:
    """
    Median per-batch time of unmix_forward and tbn_forward on the same batch.

    The UnMix-TNS state is carried from call to call, as in a real stream.

    Returns:
        {"unmix_us", "tbn_us", "ratio", "per_image_extra_us", "k", "batch_shape"}
    """
    if k is None:
        k = get("normalizers", "unmix.k", 16)
    if batch_shape is None:
        batch_shape = tuple(get("harness", "timing.batch_shape", [64, 64, 64]))
    if warmup is None:
        warmup = get("harness", "timing.warmup", 10)
    if repeats is None:
        repeats = get("harness", "timing.repeats", 100)
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")

    rng = np.random.default_rng(seed)
    b, c, _ = batch_shape
    batch = rng.standard_normal(batch_shape)
    src = SourceStats.identity(c)
    holder = {"state": init_unmix(src, k=k, alpha=0.0 if k == 1 else None, seed=rng, batch_size=b)}

    def run_unmix():
        _, holder["state"] = unmix_forward(holder["state"], batch, src.gamma, src.beta)

    def run_tbn():
        tbn_forward(batch, src.gamma, src.beta)

    unmix_ns = _median_ns(run_unmix, warmup, repeats)
    tbn_ns = _median_ns(run_tbn, warmup, repeats)

    return {
        "k": k,
        "batch_shape": list(batch_shape),
        "unmix_us": unmix_ns / 1000.0,
        "tbn_us": tbn_ns / 1000.0,
        "ratio": unmix_ns / tbn_ns,
        "per_image_extra_us": (unmix_ns - tbn_ns) / 1000.0 / b,
    }
