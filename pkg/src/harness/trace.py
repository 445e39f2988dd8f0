"""
Metrics traces and their JSON Lines serialization.

Line 1 of a trace file is a header object; every following line is one record.
Floats are written with Python's shortest round-trip repr, so loading a trace
gives back exactly the values that were saved.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from config.config_loader import get
from src import __version__
from src.errors import FormatError
from src.normalize.registry import label_for

TRACE_FORMAT = "unmix-trace"


@dataclass
class MetricsRecord:
    """Metrics of one online step."""
    t: int
    scenario: str
    norm_kind: str
    domain: str
    batch_size: int
    batch_error: float
    cumulative_error: float
    bias_l2: list[float]
    wall_time_us: Optional[float] = None

    def __post_init__(self):
        if any(b < 0 for b in self.bias_l2):
            raise ValueError(f"bias_l2 must be nonnegative, got {self.bias_l2}")


@dataclass
class MetricsTrace:
    """Complete record of one experiment."""
    config: dict
    records: list[MetricsRecord] = field(default_factory=list)
    kind: str = "run"
    code_version: str = __version__

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    @property
    def final_error(self) -> float:
        return self.records[-1].cumulative_error if self.records else float("nan")

    def errors(self) -> np.ndarray:
        return np.array([r.batch_error for r in self.records])

    def bias_matrix(self) -> np.ndarray:
        """(T, n_slots) bias_l2 values."""
        return np.array([r.bias_l2 for r in self.records])


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical (sorted-key, compact) JSON form of a config."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def quarter_means(values) -> tuple[float, float]:
    """Mean over the first and over the last quarter of a sequence."""
    values = np.asarray(values, dtype=np.float64)
    q = max(1, values.shape[0] // 4)
    return float(values[:q].mean()), float(values[-q:].mean())


def summarize(trace: MetricsTrace) -> dict:
    """Headline numbers of a trace: final error and early/late mean bias."""
    bias = trace.bias_matrix().mean(axis=1) if trace.records else np.array([np.nan])
    first, last = quarter_means(bias)
    norm_kind = trace.records[0].norm_kind if trace.records else trace.config.get("norm")
    return {
        "norm_kind": norm_kind,
        "label": label_for(norm_kind) if norm_kind else None,
        "n_batches": len(trace.records),
        "final_error": trace.final_error,
        "mean_bias_first_quarter": first,
        "mean_bias_last_quarter": last,
    }


def _header(kind: str, config: dict, code_version: str) -> dict:
    return {
        "format": TRACE_FORMAT,
        "version": get("settings", "formats.trace_version", 1),
        "kind": kind,
        "code_version": code_version,
        "config_hash": config_hash(config),
        "config": config,
    }


def write_jsonl(path: str, header: dict, rows: list[dict]) -> str:
    """Write a header line followed by one JSON object per row."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return path


def read_jsonl(path: str) -> tuple[dict, list[dict]]:
    """
    Read a file written by write_jsonl.

    Raises:
        FormatError: if the header is missing, malformed or of another version
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = [line for line in f.read().splitlines() if line.strip()]

    if not lines:
        raise FormatError(f"{path} is empty")
    try:
        header = json.loads(lines[0])
        rows = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as e:
        raise FormatError(f"{path} is not valid JSON Lines: {e}") from e

    if not isinstance(header, dict) or header.get("format") != TRACE_FORMAT:
        raise FormatError(f"{path} is not an {TRACE_FORMAT} file")
    version = header.get("version")
    if version != get("settings", "formats.trace_version", 1):
        raise FormatError(f"Unsupported trace version {version} in {path}")
    return header, rows


def save_trace(trace: MetricsTrace, path: str) -> str:
    header = _header(trace.kind, trace.config, trace.code_version)
    return write_jsonl(path, header, [asdict(r) for r in trace.records])


def load_trace(path: str) -> MetricsTrace:
    """
    Read a run trace written by save_trace.

    Raises:
        FormatError: on a bad header, a non-run trace or mismatched config hash
    """
    header, rows = read_jsonl(path)
    if header.get("kind") != "run":
        raise FormatError(f"{path} holds a '{header.get('kind')}' trace, expected 'run'")
    if header.get("config_hash") != config_hash(header["config"]):
        raise FormatError(f"{path}: config hash does not match the stored config")

    return MetricsTrace(
        config=header["config"],
        records=[MetricsRecord(**row) for row in rows],
        kind="run",
        code_version=header["code_version"],
    )


def save_bias_study(result, config: dict, path: str) -> str:
    """Write a BiasStudyResult as a 'bias' trace."""
    return write_jsonl(path, _header("bias", config, __version__), result.records())
