import sys
import os
import json
import argparse
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.config_loader import get, get_path, list_presets
from src.errors import ConfigError, ConvergenceError, FormatError
from src.normalize.base import StateMismatchError
from src.normalize.registry import ALIASES, label_for
from src.streams.synth import synth_source
from src.toynet.checkpoint import save_model
from src.toynet.train import TrainConfig, train_source
from src.harness.config import load_experiment_config
from src.harness.oracle import run_bias_study
from src.harness.runner import run_experiment, resolve_model
from src.harness.sweep import SWEEP_AXES, sweep, write_summary
from src.harness.timing import overhead
from src.harness.trace import save_bias_study, save_trace, summarize

OUTPUT_DIR = get_path("settings", "output.directory")
NORM_CHOICES = list(ALIASES)

# Flags that map one-to-one onto experiment config keys
EXPERIMENT_FLAGS = (
    "scenario", "norm", "k", "alpha", "tau", "delta", "batch_size",
    "slot_size", "order", "seed", "model", "norm_slots", "timing",
)


def cmd_train_source(args) -> int:
    """Train a source model on clean synthetic data and write a checkpoint."""
    cfg = TrainConfig(**{
        k: v for k, v in {
            "seed": args.seed,
            "epochs": args.epochs,
            "learning_rate": args.learning_rate,
        }.items() if v is not None
    })
    out = args.out or get_path("settings", "output.model_path")

    print("Step 1: Generating source data...")
    data = synth_source(seed=cfg.seed)
    print(f"  {len(data)} samples, {data.n_classes} classes")

    print("Step 2: Training...")
    model = train_source(data, cfg)

    print("Step 3: Saving checkpoint...")
    save_model(model, out)
    print(f"Done! Model: {out}")
    return 0


def experiment_config(args):
    overrides = {name: getattr(args, name, None) for name in EXPERIMENT_FLAGS}
    if overrides.get("timing") is False:
        overrides["timing"] = None
    return load_experiment_config(file=args.config, preset=args.preset, overrides=overrides)


def cmd_run(args) -> int:
    """Run one experiment and write its trace."""
    config = experiment_config(args)
    trace = run_experiment(config, verbose=True)

    out = args.out or os.path.join(OUTPUT_DIR, "traces", f"{config.norm}_{config.scenario}_s{config.seed}.jsonl")
    save_trace(trace, out)

    s = summarize(trace)
    print(f"  {s['label']} final error: {s['final_error']:.2%}")
    print(f"  Mean bias (first / last quarter): {s['mean_bias_first_quarter']:.4f} / {s['mean_bias_last_quarter']:.4f}")
    print(f"Done! Trace: {out}")
    return 0


def cmd_bias_trace(args) -> int:
    """Controlled bias study on a component-labeled stream."""
    seed = args.seed if args.seed is not None else 0
    print("Step 1: Measuring TBN and UnMix-TNS bias...")
    result = run_bias_study(
        batch_size=args.batch_size,
        repeats=args.repeats,
        seed=seed,
        k=args.k,
        alpha=args.alpha,
        tau=args.tau,
        verbose=True,
    )

    z = abs(result.z_scores)
    print(f"  {result.settings['steps']} steps, {result.settings['repeats']} repeats")
    print(f"  TBN vs closed form: {(z <= 3).mean():.1%} of entries within 3 SE")

    out = args.out or os.path.join(OUTPUT_DIR, "traces", f"bias_s{seed}.jsonl")
    save_bias_study(result, result.settings, out)
    print(f"Done! Trace: {out}")
    return 0


def cmd_sweep(args) -> int:
    """Ablation grid over one axis; writes a CSV summary."""
    base = experiment_config(args)
    values = args.values
    norm_kinds = args.norms or [base.norm]
    seeds = args.seeds

    print(f"Sweep over {args.axis}: values={values or get('harness', f'sweep.grids.{args.axis}')}")
    model = resolve_model(base, verbose=True)
    results = sweep(args.axis, values, base, norm_kinds, seeds, model=model, verbose=True)

    out = args.out or os.path.join(OUTPUT_DIR, "sweeps", f"sweep_{args.axis}.csv")
    write_summary(results, out, base)

    print(f"\n{'norm':<12}{'value':>10}{'seed':>6}{'error':>10}")
    for r in results:
        print(f"{label_for(r.norm_kind):<12}{r.value:>10g}{r.seed:>6}{r.trace.final_error:>10.2%}")
    print(f"Done! Summary: {out}")
    return 0


def cmd_bench(args) -> int:
    """Per-batch overhead of UnMix-TNS over test-time BN."""
    result = overhead(k=args.k, repeats=args.repeats)
    print(f"Batch shape {result['batch_shape']}, K={result['k']}")
    print(f"  UnMix-TNS: {result['unmix_us']:.1f} us / batch")
    print(f"  TBN:       {result['tbn_us']:.1f} us / batch")
    print(f"  Ratio:     {result['ratio']:.2f}x ({result['per_image_extra_us']:.2f} us extra per image)")
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(result, f, indent=2)
        print(f"Done! Result: {args.out}")
    return 0


def add_experiment_flags(parser):
    parser.add_argument("--config", type=str, default=None, help="Flat key-value YAML experiment file")
    parser.add_argument("--preset", choices=list_presets(), default=None, help="Experiment preset")
    parser.add_argument("--scenario", choices=["single", "continual", "mixed"], default=None)
    parser.add_argument("--norm", choices=NORM_CHOICES, default=None, help="Test-time normalizer")
    parser.add_argument("--k", type=int, default=None, help="UnMix-TNS components")
    parser.add_argument("--alpha", type=float, default=None, help="UnMix-TNS component spread in [0, 1)")
    parser.add_argument("--tau", type=float, default=None, help="Assignment temperature")
    parser.add_argument("--delta", type=float, default=None, help="Dirichlet concentration")
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--slot-size", type=int, default=None, help="Samples per Dirichlet slot")
    parser.add_argument("--order", choices=["dirichlet", "iid"], default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--model", type=str, default=None, help="Source checkpoint (.npz)")
    parser.add_argument("--norm-slots", type=int, nargs="+", default=None,
                        help="Slots that use --norm; the rest keep source statistics")
    parser.add_argument("--timing", action="store_true", help="Record wall time per batch")
    parser.add_argument("--out", type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Test-time normalization simulator for non-i.i.d. streams",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python scripts/run.py train-source
  python scripts/run.py run --norm unmix --delta 0.1 --batch-size 64
  python scripts/run.py run --preset mixed --norm tbn
  python scripts/run.py bias-trace --repeats 128
  python scripts/run.py sweep --axis batch_size --norms unmix tbn
  python scripts/run.py bench --k 16
        """
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-source", help="Train and save a source model")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--out", type=str, default=None, help="Checkpoint path")
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("run", help="Run one online experiment")
    add_experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bias-trace", help="Controlled TBN / UnMix-TNS bias study")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_bias_trace)

    p = sub.add_parser("sweep", help="Ablation grid over one axis")
    p.add_argument("--axis", choices=list(SWEEP_AXES), required=True)
    p.add_argument("--values", type=float, nargs="+", default=None)
    p.add_argument("--norms", choices=NORM_CHOICES, nargs="+", default=None)
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    add_experiment_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="UnMix-TNS overhead over TBN")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] = None) -> int:
    """Main entry point; returns the process exit status."""
    args = build_parser().parse_args(argv)

    if args.command == "sweep" and args.values is not None and args.axis in ("batch_size", "k"):
        args.values = [int(v) for v in args.values]

    try:
        return args.func(args)
    except (ConfigError, ConvergenceError, FormatError, StateMismatchError, FileNotFoundError, ValueError) as e:
        print(f"Error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
