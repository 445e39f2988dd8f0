"""
Minimal feedforward classifier with normalization slots.

Inputs are (B, C0, L0) arrays treated as 1-D feature maps. Each block applies
a per-position affine map (a 1x1 convolution), a normalization slot and a
ReLU; the head averages over the spatial axis and maps to M logits.

Gradients are written out by hand for this fixed architecture.
"""

from copy import deepcopy
from dataclasses import dataclass, field

import numpy as np

from config.config_loader import get
from src.normalize.base import BaseNormalizer, SourceStats, StateMismatchError, standardize
from src.normalize.registry import create_normalizer, resolve_kind
from src.stats.core import batch_stats, check_batch


@dataclass
class Block:
    """Affine transform followed by a normalization slot and ReLU."""
    weight: np.ndarray          # (C_out, C_in)
    bias: np.ndarray            # (C_out,)
    norm: SourceStats           # running mean/var + gamma/beta

    @property
    def width(self) -> int:
        return self.weight.shape[0]


@dataclass
class ToyModel:
    blocks: list[Block]
    head_weight: np.ndarray     # (M, C_last)
    head_bias: np.ndarray       # (M,)
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return self.head_weight.shape[0]

    @property
    def input_channels(self) -> int:
        return self.blocks[0].weight.shape[1]

    @property
    def widths(self) -> list[int]:
        return [blk.width for blk in self.blocks]

    def source_stats(self) -> list[SourceStats]:
        return [blk.norm for blk in self.blocks]

    def copy(self) -> "ToyModel":
        return deepcopy(self)


def init_model(input_channels: int, hidden: list[int], n_classes: int, seed=0) -> ToyModel:
    """He-normal weights, zero biases, identity normalization slots."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    blocks = []
    c_in = input_channels
    for width in hidden:
        blocks.append(Block(
            weight=rng.standard_normal((width, c_in)) * np.sqrt(2.0 / c_in),
            bias=np.zeros(width),
            norm=SourceStats.identity(width),
        ))
        c_in = width

    return ToyModel(
        blocks=blocks,
        head_weight=rng.standard_normal((n_classes, c_in)) * np.sqrt(1.0 / c_in),
        head_bias=np.zeros(n_classes),
    )


def affine(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Per-position linear map: (B, C_in, L) -> (B, C_out, L)."""
    return np.einsum("oc,bcl->bol", weight, x) + bias[None, :, None]


def head(model: ToyModel, features: np.ndarray) -> np.ndarray:
    """Spatial average pooling followed by the linear classifier."""
    pooled = features.mean(axis=2)
    return pooled @ model.head_weight.T + model.head_bias


def init_norm_states(
    model: ToyModel,
    norm_kind: str,
    norm_slots: list[int] = None,
    batch_size: int = None,
    seed: int = 0,
    **params,
) -> list[BaseNormalizer]:
    """
    One normalizer per slot, initialized from the model's stored statistics.

    Args:
        model: Trained model
        norm_kind: Normalizer kind or CLI alias
        norm_slots: Slots that use norm_kind; the others keep source statistics (None = all)
        batch_size: Test batch size (sets the UnMix-TNS momentum)
        seed: Seed for component initialization; each slot gets its own stream
        **params: Hyperparameters passed to create_normalizer (k, alpha, tau, alpha_bn, ...)
    """
    kind = resolve_kind(norm_kind)
    n_slots = len(model.blocks)
    if norm_slots is None:
        norm_slots = list(range(n_slots))
    bad = [s for s in norm_slots if not 0 <= s < n_slots]
    if bad:
        raise StateMismatchError(f"Model has {n_slots} normalization slots, got slot(s) {bad}")

    states = []
    for i, src in enumerate(model.source_stats()):
        slot_kind = kind if i in norm_slots else "source_bn"
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        states.append(create_normalizer(slot_kind, src, batch_size=batch_size, seed=rng, **params))
    return states


def forward_eval(
    model: ToyModel,
    x,
    norm_kind: str = "source_bn",
    norm_states: list[BaseNormalizer] = None,
) -> tuple[np.ndarray, list[BaseNormalizer]]:
    """
    Inference pass with pluggable normalization.

    Args:
        model: Trained model (never modified)
        x: (B, C0, L0) inputs
        norm_kind: Normalizer kind or CLI alias
        norm_states: Per-slot normalizers from init_norm_states; may be omitted
            for stateless kinds

    Returns:
        (logits of shape (B, M), norm_states after this batch)

    Raises:
        StateMismatchError: if the states do not belong to norm_kind or the model
    """
    kind = resolve_kind(norm_kind)
    if norm_states is None:
        if kind in ("ema_bn", "unmix_tns"):
            raise StateMismatchError(f"'{kind}' is stateful; pass norm_states from init_norm_states")
        norm_states = init_norm_states(model, kind)

    if len(norm_states) != len(model.blocks):
        raise StateMismatchError(f"Model has {len(model.blocks)} slots, got {len(norm_states)} states")
    for i, state in enumerate(norm_states):
        if state.kind not in (kind, "source_bn"):
            raise StateMismatchError(f"Slot {i} holds a '{state.kind}' state, requested '{kind}'")

    a = check_batch(x)
    for block, state in zip(model.blocks, norm_states):
        a = np.maximum(state.forward(affine(a, block.weight, block.bias)), 0.0)

    return head(model, a), norm_states


def predict(logits: np.ndarray) -> np.ndarray:
    return np.argmax(logits, axis=1)


# ======================
# TRAINING PASS
# ======================

def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -log_probs[np.arange(n), labels].mean()

    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def forward_train(model: ToyModel, x: np.ndarray, eps: float = None) -> tuple[np.ndarray, list[dict]]:
    """
    Training-mode pass: every slot normalizes with the current batch statistics.

    Returns:
        (logits, per-block caches for backward)
    """
    if eps is None:
        eps = get("normalizers", "eps", 1e-6)

    caches = []
    a = x
    for block in model.blocks:
        h = affine(a, block.weight, block.bias)
        stats = batch_stats(h)
        inv_std = 1.0 / np.sqrt(stats.var + eps)
        xhat = (h - stats.mean[None, :, None]) * inv_std[None, :, None]
        y = standardize(h, stats.mean, stats.var, block.norm.gamma, block.norm.beta, eps)
        caches.append({"input": a, "xhat": xhat, "inv_std": inv_std, "pre_relu": y, "stats": stats})
        a = np.maximum(y, 0.0)

    caches.append({"features": a})
    return head(model, a), caches


def backward(model: ToyModel, caches: list[dict], dlogits: np.ndarray) -> dict:
    """
    Gradients of the loss for every parameter, given dL/dlogits.

    Returns:
        {"head_weight", "head_bias", "blocks": [{"weight", "bias", "gamma", "beta"}, ...]}
    """
    features = caches[-1]["features"]
    spatial = features.shape[2]
    pooled = features.mean(axis=2)

    grads = {
        "head_weight": dlogits.T @ pooled,
        "head_bias": dlogits.sum(axis=0),
        "blocks": [None] * len(model.blocks),
    }

    da = np.repeat((dlogits @ model.head_weight)[:, :, None], spatial, axis=2) / spatial

    for i in reversed(range(len(model.blocks))):
        block, cache = model.blocks[i], caches[i]
        xhat, inv_std = cache["xhat"], cache["inv_std"]
        n = xhat.shape[0] * xhat.shape[2]

        dy = da * (cache["pre_relu"] > 0)
        dgamma = (dy * xhat).sum(axis=(0, 2))
        dbeta = dy.sum(axis=(0, 2))

        dxhat = dy * block.norm.gamma[None, :, None]
        sum_dxhat = dxhat.sum(axis=(0, 2))[None, :, None]
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
        dh = (inv_std[None, :, None] / n) * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)

        grads["blocks"][i] = {
            "weight": np.einsum("bol,bcl->oc", dh, cache["input"]),
            "bias": dh.sum(axis=(0, 2)),
            "gamma": dgamma,
            "beta": dbeta,
        }
        da = np.einsum("oc,bol->bcl", block.weight, dh)

    return grads


def loss_and_grads(model: ToyModel, x: np.ndarray, labels: np.ndarray, eps: float = None) -> tuple[float, dict]:
    logits, caches = forward_train(model, x, eps)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    return loss, backward(model, caches, dlogits)


def gradient_check(model: ToyModel, x: np.ndarray, labels: np.ndarray, h: float = 1e-5, eps: float = None) -> float:
    """
    Largest relative difference between analytic and central-difference gradients.

    Checks every parameter of every block and the head.
    """
    _, grads = loss_and_grads(model, x, labels, eps)

    params = [(model.head_weight, grads["head_weight"]), (model.head_bias, grads["head_bias"])]
    for block, g in zip(model.blocks, grads["blocks"]):
        params += [
            (block.weight, g["weight"]),
            (block.bias, g["bias"]),
            (block.norm.gamma, g["gamma"]),
            (block.norm.beta, g["beta"]),
        ]

    worst = 0.0
    for param, analytic in params:
        numeric = np.zeros_like(param)
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            original = param[idx]
            param[idx] = original + h
            plus, _ = softmax_cross_entropy(forward_train(model, x, eps)[0], labels)
            param[idx] = original - h
            minus, _ = softmax_cross_entropy(forward_train(model, x, eps)[0], labels)
            param[idx] = original
            numeric[idx] = (plus - minus) / (2 * h)

        scale = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / scale)))
    return worst
