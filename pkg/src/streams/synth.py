"""
Synthetic classification data standing in for an image test set.

Each class is a Gaussian around a class mean; class means sit on a circle
layout across input channels so that every pair of classes is separated.
"""

import os
from dataclasses import dataclass

import numpy as np

from config.config_loader import get
from src.errors import FormatError

DATASET_FORMAT = "unmix-dataset"


@dataclass
class SynthDataset:
    """Samples (N, C0, L0), integer labels (N,), per-class means/variances (M, C0)."""
    samples: np.ndarray
    labels: np.ndarray
    class_means: np.ndarray
    class_vars: np.ndarray

    def __post_init__(self):
        m = self.class_means.shape[0]
        if self.samples.ndim != 3 or self.samples.shape[0] != self.labels.shape[0]:
            raise ValueError(f"samples {self.samples.shape} and labels {self.labels.shape} disagree")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= m):
            raise ValueError(f"labels must lie in [0, {m})")
        counts = np.bincount(self.labels, minlength=m)
        if np.any(counts == 0):
            raise ValueError(f"Every class needs at least one sample, counts: {counts.tolist()}")

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[0]

    def __len__(self) -> int:
        return self.labels.shape[0]

    def subset(self, indices) -> "SynthDataset":
        """Dataset restricted to the given sample indices (class layout kept)."""
        indices = np.asarray(indices)
        return SynthDataset(
            samples=self.samples[indices],
            labels=self.labels[indices],
            class_means=self.class_means,
            class_vars=self.class_vars,
        )


def class_layout(n_classes: int, channels: int, radius: float) -> np.ndarray:
    """
    Class means on a circle: mean[m, c] = radius * cos(2*pi*m/M + 2*pi*c/C0).

    Pairwise distances are radius^2 * C0 * (1 - cos(2*pi*(m - m')/M)) for C0 >= 3.
    """
    m = np.arange(n_classes)[:, None]
    c = np.arange(channels)[None, :]
    return radius * np.cos(2 * np.pi * m / n_classes + 2 * np.pi * c / channels)


def synth_source(
    n_classes: int = None,
    channels: int = None,
    spatial: int = None,
    n_per_class: int = None,
    spread: float = None,
    seed=0,
    radius: float = None,
) -> SynthDataset:
    """
    Generate a labeled Gaussian-class dataset.

    Args:
        n_classes: Number of classes M >= 2 (default: dataset.classes)
        channels: Input channels C0 (default: dataset.input_channels)
        spatial: Spatial extent L0 (default: dataset.spatial)
        n_per_class: Samples per class (default: dataset.n_per_class_train)
        spread: Per-class standard deviation (default: dataset.spread)
        seed: Integer seed or numpy Generator
        radius: Radius of the class-mean layout (default: dataset.radius)

    Returns:
        SynthDataset sorted by label; reproducible from seed
    """
    if n_classes is None:
        n_classes = get("streams", "dataset.classes", 5)
    if channels is None:
        channels = get("streams", "dataset.input_channels", 8)
    if spatial is None:
        spatial = get("streams", "dataset.spatial", 4)
    if n_per_class is None:
        n_per_class = get("streams", "dataset.n_per_class_train", 400)
    if spread is None:
        spread = get("streams", "dataset.spread", 1.0)
    if radius is None:
        radius = get("streams", "dataset.radius", 2.0)

    if n_classes < 2:
        raise ValueError(f"Need at least 2 classes, got {n_classes}")
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    if spread < 0:
        raise ValueError(f"spread must be nonnegative, got {spread}")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    class_means = class_layout(n_classes, channels, radius)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    noise = rng.standard_normal((labels.shape[0], channels, spatial))
    samples = class_means[labels][:, :, None] + spread * noise

    return SynthDataset(
        samples=samples,
        labels=labels,
        class_means=class_means,
        class_vars=np.full((n_classes, channels), float(spread) ** 2),
    )


def save_dataset(dataset: SynthDataset, path: str) -> str:
    """Write a dataset to a versioned .npz archive."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    np.savez(
        path,
        format=np.array(DATASET_FORMAT),
        version=np.array(get("settings", "formats.artifact_version", 1)),
        samples=dataset.samples,
        labels=dataset.labels,
        class_means=dataset.class_means,
        class_vars=dataset.class_vars,
    )
    return path


def load_dataset(path: str) -> SynthDataset:
    """
    Read a dataset written by save_dataset.

    Raises:
        FormatError: if the archive is not a dataset of a supported version
    """
    with np.load(path) as data:
        if "format" not in data or str(data["format"]) != DATASET_FORMAT:
            raise FormatError(f"{path} is not a {DATASET_FORMAT} archive")
        version = int(data["version"])
        if version != get("settings", "formats.artifact_version", 1):
            raise FormatError(f"Unsupported dataset version {version} in {path}")
        return SynthDataset(
            samples=data["samples"],
            labels=data["labels"],
            class_means=data["class_means"],
            class_vars=data["class_vars"],
        )
