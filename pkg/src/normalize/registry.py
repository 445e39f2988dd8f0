from .base import BaseNormalizer, SourceStats, StateMismatchError
from .batch_norm import AlphaBN, SourceBN, TBN
from .ema_bn import EmaBN
from .unmix_tns import UnMixTNS

NORMALIZERS: dict[str, type[BaseNormalizer]] = {
    "source_bn": SourceBN,
    "tbn": TBN,
    "alpha_bn": AlphaBN,
    "ema_bn": EmaBN,
    "unmix_tns": UnMixTNS,
}

# CLI spelling -> kind
ALIASES = {
    "source": "source_bn",
    "tbn": "tbn",
    "alpha-bn": "alpha_bn",
    "ema-bn": "ema_bn",
    "unmix": "unmix_tns",
}


def resolve_kind(name: str) -> str:
    """Accept either a kind ("unmix_tns") or its CLI alias ("unmix")."""
    if name in NORMALIZERS:
        return name
    if name in ALIASES:
        return ALIASES[name]
    choices = sorted(set(NORMALIZERS) | set(ALIASES))
    raise ValueError(f"Unknown normalizer '{name}'. Choose from: {', '.join(choices)}")


def label_for(kind: str) -> str:
    """Display label, e.g. "EMA-BN" for ema_bn."""
    return NORMALIZERS[resolve_kind(kind)].label


def create_normalizer(
    kind: str,
    src: SourceStats,
    k: int = None,
    alpha: float = None,
    tau: float = None,
    alpha_bn: float = None,
    ema_momentum: float = None,
    eps: float = None,
    batch_size: int = None,
    seed=0,
) -> BaseNormalizer:
    """
    Build a normalizer of the given kind for one layer.

    Hyperparameters that do not apply to the kind are ignored; None falls back
    to config/normalizers.yaml.
    """
    kind = resolve_kind(kind)

    if kind == "source_bn":
        return SourceBN(src, eps=eps)
    if kind == "tbn":
        return TBN(src, eps=eps)
    if kind == "alpha_bn":
        return AlphaBN(src, alpha_bn=alpha_bn, eps=eps)
    if kind == "ema_bn":
        return EmaBN(src, momentum=ema_momentum, eps=eps)
    if kind == "unmix_tns":
        return UnMixTNS(src, k=k, alpha=alpha, tau=tau, batch_size=batch_size, eps=eps, seed=seed)

    raise StateMismatchError(f"No constructor registered for '{kind}'")
