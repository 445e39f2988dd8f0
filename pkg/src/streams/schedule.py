import numpy as np

SCENARIOS = ("single", "continual", "mixed")


def schedule_domains(scenario: str, domains, n_batches: int, seed=0, batch_size: int = 1) -> list[np.ndarray]:
    """
    Domain index of every sample in every batch.

    single:    contiguous equal segments, one domain each (the harness resets
               normalizer state when the domain changes)
    continual: contiguous equal segments, no resets
    mixed:     every sample draws its own domain uniformly at random

    Args:
        scenario: One of SCENARIOS
        domains: Sequence of domains (only its length is used)
        n_batches: Number of batches
        seed: Integer seed or numpy Generator (used by mixed only)
        batch_size: Samples per batch

    Returns:
        n_batches arrays of length batch_size holding indices into domains

    Raises:
        ValueError: on an unknown scenario or an empty domain list
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"Unknown scenario '{scenario}'. Choose from: {', '.join(SCENARIOS)}")

    n_domains = len(domains)
    if n_domains < 1:
        raise ValueError("At least one domain is required")

    if scenario == "mixed":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return [rng.integers(n_domains, size=batch_size) for _ in range(n_batches)]

    segments = np.array_split(np.arange(n_batches), n_domains)
    per_batch = np.empty(n_batches, dtype=np.int64)
    for d, seg in enumerate(segments):
        per_batch[seg] = d
    return [np.full(batch_size, d, dtype=np.int64) for d in per_batch]


def reset_points(scenario: str, assignments: list[np.ndarray]) -> list[bool]:
    """True for batches where the single-domain protocol resets normalizer state."""
    if scenario != "single":
        return [False] * len(assignments)

    resets = []
    previous = None
    for a in assignments:
        current = int(a[0])
        resets.append(previous is not None and current != previous)
        previous = current
    return resets
