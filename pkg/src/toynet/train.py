"""
Source training of the toy network with plain mini-batch SGD.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from config.config_loader import get
from src.errors import ConvergenceError
from src.streams.synth import SynthDataset
from .model import ToyModel, forward_eval, forward_train, backward, init_model, predict, softmax_cross_entropy


class TrainConfig(BaseModel):
    """SGD settings; unset fields come from config/training.yaml."""

    model_config = ConfigDict(extra="forbid")

    hidden: list[int] = Field(default_factory=lambda: list(get("training", "arch.hidden", [32, 32])), min_length=1)
    epochs: int = Field(default_factory=lambda: get("training", "train.epochs", 20), ge=1)
    learning_rate: float = Field(default_factory=lambda: get("training", "train.learning_rate", 0.1), gt=0)
    batch_size: int = Field(default_factory=lambda: get("training", "train.batch_size", 64), ge=2)
    bn_momentum: float = Field(default_factory=lambda: get("training", "train.bn_momentum", 0.1), gt=0, le=1)
    min_accuracy: float = Field(default_factory=lambda: get("training", "train.min_accuracy", 0.95), ge=0, le=1)
    seed: int = Field(default_factory=lambda: get("training", "train.seed", 0))


def evaluate_accuracy(model: ToyModel, dataset: SynthDataset, norm_kind: str = "source_bn",
                      batch_size: int = 256) -> float:
    """Accuracy of a stateless normalizer over a dataset, in fixed-size batches."""
    correct = 0
    for start in range(0, len(dataset), batch_size):
        x = dataset.samples[start:start + batch_size]
        logits, _ = forward_eval(model, x, norm_kind)
        correct += int(np.sum(predict(logits) == dataset.labels[start:start + batch_size]))
    return correct / len(dataset)


def _update_running_stats(model: ToyModel, caches: list[dict], momentum: float):
    for block, cache in zip(model.blocks, caches):
        stats = cache["stats"]
        block.norm.mean = (1.0 - momentum) * block.norm.mean + momentum * stats.mean
        block.norm.var = (1.0 - momentum) * block.norm.var + momentum * stats.var


def _sgd_step(model: ToyModel, grads: dict, lr: float):
    model.head_weight -= lr * grads["head_weight"]
    model.head_bias -= lr * grads["head_bias"]
    for block, g in zip(model.blocks, grads["blocks"]):
        block.weight -= lr * g["weight"]
        block.bias -= lr * g["bias"]
        block.norm.gamma -= lr * g["gamma"]
        block.norm.beta -= lr * g["beta"]


def train_source(dataset: SynthDataset, cfg: TrainConfig = None, verbose: bool = True) -> ToyModel:
    """
    Train a model on clean source data.

    Normalization slots use batch statistics during training and keep an
    exponential moving average (bn_momentum) of them as the stored statistics.

    Args:
        dataset: Labeled source data
        cfg: Training settings (default: config/training.yaml)
        verbose: Show progress

    Returns:
        Trained ToyModel, with training settings and accuracy in model.meta

    Raises:
        ConvergenceError: if training accuracy ends below cfg.min_accuracy
    """
    if cfg is None:
        cfg = TrainConfig()

    rng = np.random.default_rng(cfg.seed)
    model = init_model(dataset.samples.shape[1], cfg.hidden, dataset.n_classes, rng)
    n = len(dataset)

    if verbose:
        print(f"[Train] {n} samples, {dataset.n_classes} classes, hidden={cfg.hidden}")

    epochs = tqdm(range(cfg.epochs), desc="Training", unit="epoch", disable=not verbose)
    for epoch in epochs:
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            if idx.shape[0] < 2:
                continue
            logits, caches = forward_train(model, dataset.samples[idx])
            loss, dlogits = softmax_cross_entropy(logits, dataset.labels[idx])
            grads = backward(model, caches, dlogits)
            _sgd_step(model, grads, cfg.learning_rate)
            _update_running_stats(model, caches, cfg.bn_momentum)
            losses.append(loss)
        epochs.set_postfix(loss=f"{np.mean(losses):.4f}")

    accuracy = evaluate_accuracy(model, dataset)
    if verbose:
        print(f"[Train] Source accuracy: {accuracy:.2%}")

    if accuracy < cfg.min_accuracy:
        raise ConvergenceError(accuracy, cfg.min_accuracy)

    model.meta = {**cfg.model_dump(), "train_accuracy": accuracy}
    return model
