"""
Ablation sweeps over one experiment axis.
"""

import csv
import os
from dataclasses import dataclass

from tqdm import tqdm

from config.config_loader import get
from src import __version__
from src.toynet.model import ToyModel
from .config import ExperimentConfig
from .runner import held_out_dataset, resolve_model, run_experiment
from .trace import MetricsTrace, config_hash, summarize

# axis name -> flat config key
SWEEP_AXES = {
    "delta": "delta",
    "batch_size": "batch_size",
    "k": "k",
    "alpha": "alpha",
}

SUMMARY_FIELDS = [
    "axis", "value", "norm_kind", "label", "seed", "n_batches",
    "final_error", "mean_bias_first_quarter", "mean_bias_last_quarter", "config_hash",
]


@dataclass
class SweepResult:
    axis: str
    value: float
    norm_kind: str
    seed: int
    trace: MetricsTrace


def cell_config(base: ExperimentConfig, axis: str, value, norm_kind: str, seed: int) -> ExperimentConfig:
    """
    Config of one sweep cell.

    A batch-size sweep keeps the Dirichlet slot size of the base config, so the
    stream's label correlation stays the same while B varies. A K=1 cell has
    no component spread.
    """
    overrides = {SWEEP_AXES[axis]: value, "norm": norm_kind, "seed": seed}
    if axis == "batch_size" and base.slot_size is None:
        overrides["slot_size"] = base.batch_size
    if axis == "k" and value == 1:
        overrides["alpha"] = 0.0
    return base.with_overrides(**overrides)


def sweep(
    axis: str,
    values: list = None,
    base: ExperimentConfig = None,
    norm_kinds: list[str] = None,
    seeds: list[int] = None,
    model: ToyModel = None,
    verbose: bool = False,
) -> list[SweepResult]:
    """
    Run run_experiment for every (value, normalizer, seed) cell.

    All cells of one seed share the same test split, stream seed and model.

    Args:
        axis: One of SWEEP_AXES
        values: Axis values (default: sweep.grids.<axis>)
        base: Config for everything but the swept axis (default: ExperimentConfig())
        norm_kinds: Normalizers to compare (default: base.norm)
        seeds: Experiment seeds (default: sweep.seeds)
        model: Trained model shared by every cell (default: resolve_model(base))
        verbose: Show progress

    Raises:
        ValueError: on an unknown axis
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"Unknown sweep axis '{axis}'. Choose from: {', '.join(SWEEP_AXES)}")
    if base is None:
        base = ExperimentConfig()
    if values is None:
        values = get("harness", f"sweep.grids.{axis}", [])
    if norm_kinds is None:
        norm_kinds = [base.norm]
    if seeds is None:
        seeds = get("harness", "sweep.seeds", [0])
    if model is None:
        model = resolve_model(base, verbose)

    cells = [(v, n, s) for s in seeds for n in norm_kinds for v in values]
    results = []
    datasets = {}
    for value, norm_kind, seed in tqdm(cells, desc=f"Sweep {axis}", unit="run", disable=not verbose):
        cfg = cell_config(base, axis, value, norm_kind, seed)
        if seed not in datasets:
            datasets[seed] = held_out_dataset(cfg)
        trace = run_experiment(cfg, model=model, dataset=datasets[seed])
        results.append(SweepResult(axis=axis, value=value, norm_kind=cfg.norm, seed=seed, trace=trace))

    return results


def summary_rows(results: list[SweepResult]) -> list[dict]:
    rows = []
    for r in results:
        s = summarize(r.trace)
        rows.append({
            "axis": r.axis,
            "value": r.value,
            "norm_kind": r.norm_kind,
            "label": s["label"],
            "seed": r.seed,
            "n_batches": s["n_batches"],
            "final_error": s["final_error"],
            "mean_bias_first_quarter": s["mean_bias_first_quarter"],
            "mean_bias_last_quarter": s["mean_bias_last_quarter"],
            "config_hash": r.trace.config_hash,
        })
    return rows


def write_summary(results: list[SweepResult], path: str, base: ExperimentConfig = None) -> str:
    """
    Write one CSV row per sweep cell, under a commented header line carrying
    the code version and the base config hash.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    base_hash = config_hash(base.model_dump(mode="json")) if base is not None else ""

    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# code_version={__version__} base_config_hash={base_hash}\n")
        writer = csv.DictWriter(f, fieldnames=SUMMARY_FIELDS)
        writer.writeheader()
        writer.writerows(summary_rows(results))
    return path


def read_summary(path: str) -> list[dict]:
    """Rows of a summary CSV, numeric columns converted."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = [line for line in f if not line.startswith("#")]

    rows = []
    for row in csv.DictReader(lines):
        for key in ("value", "final_error", "mean_bias_first_quarter", "mean_bias_last_quarter"):
            row[key] = float(row[key])
        for key in ("seed", "n_batches"):
            row[key] = int(row[key])
        rows.append(row)
    return rows
