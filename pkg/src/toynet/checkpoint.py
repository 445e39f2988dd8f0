"""
Versioned .npz checkpoints for trained toy models.
"""

import json
import os

import numpy as np

from config.config_loader import get
from src.errors import FormatError
from src.normalize.base import SourceStats
from .model import Block, ToyModel

MODEL_FORMAT = "unmix-toynet"


def save_model(model: ToyModel, path: str) -> str:
    """
    Write weights, stored statistics and affine parameters of every block.

    Returns:
        Path written
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)

    arrays = {
        "format": np.array(MODEL_FORMAT),
        "version": np.array(get("settings", "formats.artifact_version", 1)),
        "n_blocks": np.array(len(model.blocks)),
        "meta": np.array(json.dumps(model.meta, sort_keys=True, default=str)),
        "head_weight": model.head_weight,
        "head_bias": model.head_bias,
    }
    for i, block in enumerate(model.blocks):
        arrays[f"block{i}_weight"] = block.weight
        arrays[f"block{i}_bias"] = block.bias
        arrays[f"block{i}_mean"] = block.norm.mean
        arrays[f"block{i}_var"] = block.norm.var
        arrays[f"block{i}_gamma"] = block.norm.gamma
        arrays[f"block{i}_beta"] = block.norm.beta

    np.savez(path, **arrays)
    return path


def load_model(path: str) -> ToyModel:
    """
    Read a model written by save_model.

    Raises:
        FileNotFoundError: if path does not exist
        FormatError: if the archive is not a toy model of a supported version
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Model checkpoint not found: {path}")

    with np.load(path) as data:
        if "format" not in data or str(data["format"]) != MODEL_FORMAT:
            raise FormatError(f"{path} is not a {MODEL_FORMAT} checkpoint")
        version = int(data["version"])
        if version != get("settings", "formats.artifact_version", 1):
            raise FormatError(f"Unsupported checkpoint version {version} in {path}")

        blocks = []
        for i in range(int(data["n_blocks"])):
            blocks.append(Block(
                weight=data[f"block{i}_weight"],
                bias=data[f"block{i}_bias"],
                norm=SourceStats(
                    mean=data[f"block{i}_mean"],
                    var=data[f"block{i}_var"],
                    gamma=data[f"block{i}_gamma"],
                    beta=data[f"block{i}_beta"],
                ),
            ))

        return ToyModel(
            blocks=blocks,
            head_weight=data["head_weight"],
            head_bias=data["head_bias"],
            meta=json.loads(str(data["meta"])),
        )
