"""Command-line entry point: `ccr-lab <command>` wires the modules together.

Commands cover the full workflow (gen, train1, weights, train2, eval,
attribute) plus experiment automation (sweep, compare). Every command writes
plain files into --out; re-running with identical inputs and seed rewrites
byte-identical artifacts. manifest.json in the output directory records
config hashes per command for provenance.

Exit codes: 0 success, 2 usage/config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import FvecFormatError, LabeledDataset, RngSeed, dataset_from_fvec, dataset_to_fvec
from .datagen import SyntheticConfig, bench_v1, generate_ideal, group_counts, subsample_observe
from .evaluation import default_block_spec, group_metrics, occlusion_attribution
from .ipw import weights_from_csv, weights_to_csv, WeightVector
from .model import params_from_json, params_to_json
from .pipeline import (BENCH_BETA, BENCH_LAMBDA, BENCH_LAMBDA_GRID,
                       BENCH_FEATURE_DIM, TEST_SEED_OFFSET,
                       bench_stage1_config, bench_stage2_config,
                       compute_weights, method_configs, run_method)
from .train import (DivergenceError, TrainConfig, evaluate_stage1,
                    train_stage1, train_stage2)

COMPARE_METHODS_DEFAULT = ("erm", "ccr-jtt", "ccr-afr", "ccr")
COMPARE_METHODS_FULL = (
    "erm", "disentangle", "cfs", "ipw",
    "disentangle+cfs", "disentangle+ipw", "cfs+ipw", "ccr",
    "ccr-afr", "ccr-jtt",
)


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything cmd_compare needs: data source, configs, seeds, output."""

    synth: SyntheticConfig
    stage1: TrainConfig
    stage2: TrainConfig
    seeds: tuple
    out_dir: str
    methods: tuple = COMPARE_METHODS_DEFAULT
    beta: float = BENCH_BETA
    lam: float = BENCH_LAMBDA
    feature_dim: int = BENCH_FEATURE_DIM

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds list must be non-empty")


def _thread_cap() -> int:
    raw = os.environ.get("CCR_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"CCR_THREADS must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ValueError("CCR_THREADS must be >= 1")
    return cap


def _read_text(path: Path) -> str:
    if not path.is_file():
        raise FileNotFoundError(f"missing input file: {path}")
    return path.read_text()


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _update_manifest(out: Path, command: str, entry: dict) -> None:
    manifest_path = out / "manifest.json"
    manifest = {}
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text())
    manifest[command] = entry
    _write_text(manifest_path, _json_dumps(manifest))


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _load_synth(args) -> tuple[SyntheticConfig, str]:
    """Synthetic config from --config, or bench-v1 when the flag is absent."""
    if getattr(args, "config", None):
        text = _read_text(Path(args.config))
        return SyntheticConfig.from_json(text), text
    config = bench_v1()
    return config, config.to_json()


def _sidecar_synth(out: Path) -> SyntheticConfig | None:
    path = out / "synth_config.json"
    if path.is_file():
        return SyntheticConfig.from_json(path.read_text())
    return None


def _load_train_config(args, default: TrainConfig) -> TrainConfig:
    config = default
    if getattr(args, "config", None):
        config = TrainConfig.from_json(_read_text(Path(args.config)))
    overrides = {}
    for flag, field_name in (
        ("seed", "seed"), ("beta", "beta"), ("lam", "lam"),
        ("estimator", "ipw_estimator"), ("variant", "pns_variant"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field_name] = value
    if getattr(args, "warm_start", None) is not None:
        overrides["warm_start_head"] = args.warm_start
    if overrides:
        config = replace(config, **overrides)
    return config


def _load_observed(out: Path) -> LabeledDataset:
    synth = _sidecar_synth(out)
    causal_dim = synth.causal_dim if synth is not None else None
    svc = synth.spurious_value_count if synth is not None else None
    return dataset_from_fvec(out / "observed.fvec", causal_dim=causal_dim,
                             spurious_value_count=svc)


def _load_params(out: Path, stage: int, override: str | None = None):
    path = Path(override) if override else out / f"params_stage{stage}.json"
    return params_from_json(_read_text(path))


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    synth, config_text = _load_synth(args)
    seed = RngSeed(args.seed)
    ideal = generate_ideal(synth, seed)
    observed, _ = subsample_observe(ideal, synth, seed)

    dataset_to_fvec(ideal, out / "ideal.fvec")
    dataset_to_fvec(observed, out / "observed.fvec")
    _write_text(out / "groups.json", _json_dumps(
        {str(g): c for g, c in group_counts(observed).items()}
    ))
    _write_text(out / "synth_config.json", config_text)
    _update_manifest(out, "gen", {
        "config_sha256": _sha256(config_text),
        "seed": args.seed,
        "artifacts": ["ideal.fvec", "observed.fvec", "groups.json", "synth_config.json"],
    })
    print(f"wrote ideal ({ideal.n} samples) and observed ({observed.n} samples) to {out}")
    return 0


def cmd_train1(args) -> int:
    out = Path(args.out)
    config = _load_train_config(args, bench_stage1_config())
    observed = _load_observed(out)
    encoder, head, history = train_stage1(
        observed, args.feature_dim, config, RngSeed(config.seed)
    )
    _write_text(out / "params_stage1.json", params_to_json(encoder, head))
    _write_text(out / "history_stage1.json", history.to_json())
    config_text = _json_dumps(config.__dict__)
    _write_text(out / "train1_config.json", config_text)
    _update_manifest(out, "train1", {
        "config_sha256": _sha256(config_text),
        "seed": config.seed,
        "artifacts": ["params_stage1.json", "history_stage1.json", "train1_config.json"],
    })
    final = history.epochs[-1]
    print(f"stage 1 done: {len(history.epochs)} epochs, "
          f"train acc {final['train_acc']:.4f}, loss {final['total']:.4f}")
    return 0


def cmd_weights(args) -> int:
    out = Path(args.out)
    observed = _load_observed(out)
    encoder, head = _load_params(out, 1)
    preds, probs, _ = evaluate_stage1(encoder, head, observed)
    config = _load_train_config(args, bench_stage2_config())
    synth = _sidecar_synth(out)
    weights, pseudo = compute_weights(
        args.estimator, config, preds, probs, observed, synth
    )
    _write_text(out / "weights.csv", weights_to_csv(weights, pseudo))
    _update_manifest(out, "weights", {
        "estimator": args.estimator,
        "artifacts": ["weights.csv"],
    })
    w = weights.weights
    print(f"wrote {w.shape[0]} weights (estimator={args.estimator}, "
          f"min {w.min():.4f}, max {w.max():.4f})")
    return 0


def cmd_train2(args) -> int:
    out = Path(args.out)
    config = _load_train_config(args, bench_stage2_config())
    observed = _load_observed(out)
    encoder, head1 = _load_params(out, 1)
    raw, _ = weights_from_csv(_read_text(out / "weights.csv"))
    weights = WeightVector(weights=raw, normalization="none")
    head2, history = train_stage2(
        encoder, head1, observed, weights, config, RngSeed(config.seed)
    )
    _write_text(out / "params_stage2.json", params_to_json(encoder, head2))
    _write_text(out / "history_stage2.json", history.to_json())
    config_text = _json_dumps(config.__dict__)
    _write_text(out / "train2_config.json", config_text)
    _update_manifest(out, "train2", {
        "config_sha256": _sha256(config_text),
        "seed": config.seed,
        "artifacts": ["params_stage2.json", "history_stage2.json", "train2_config.json"],
    })
    final = history.epochs[-1]
    print(f"stage 2 done: {len(history.epochs)} epochs, "
          f"train acc {final['train_acc']:.4f}, loss {final['total']:.4f}")
    return 0


def _eval_dataset(out: Path, args) -> LabeledDataset:
    data_path = Path(args.data) if args.data else out / "ideal.fvec"
    synth = _sidecar_synth(out)
    causal_dim = synth.causal_dim if synth is not None else None
    svc = synth.spurious_value_count if synth is not None else None
    return dataset_from_fvec(data_path, causal_dim=causal_dim,
                             spurious_value_count=svc)


def cmd_eval(args) -> int:
    out = Path(args.out)
    dataset = _eval_dataset(out, args)
    encoder, head = _load_params(out, 2, args.params)
    preds, _, _ = evaluate_stage1(encoder, head, dataset)
    groups = dataset.group_ids if dataset.group_ids is not None else dataset.labels
    metrics = group_metrics(preds, dataset.labels, groups)
    _write_text(out / "metrics.json", _json_dumps(metrics.to_dict()))
    _update_manifest(out, "eval", {"artifacts": ["metrics.json"]})
    print(metrics.render_table())
    return 0


def cmd_attribute(args) -> int:
    out = Path(args.out)
    dataset = _eval_dataset(out, args)
    encoder, head = _load_params(out, 2, args.params)
    if dataset.spurious_dim > 0:
        spec = default_block_spec(dataset)
    else:
        spec = {"all": (0, dataset.dim)}
    report = occlusion_attribution(encoder, head, dataset, spec, RngSeed(args.seed))
    _write_text(out / "attribution.json", _json_dumps(report.to_dict()))
    _update_manifest(out, "attribute", {"artifacts": ["attribution.json"]})
    for name, vals in sorted(report.block_attribution.items()):
        print(f"{name:>12}  mean |dp| per class: "
              + "  ".join(f"{v:.4f}" for v in vals))
    return 0


def _lam_dirname(lam: float) -> str:
    return f"lam_{lam:g}"


def cmd_sweep(args) -> int:
    out = Path(args.out)
    synth, config_text = _load_synth(args)
    grid = tuple(float(x) for x in args.grid.split(",")) if args.grid else BENCH_LAMBDA_GRID
    beta = args.beta if args.beta is not None else BENCH_BETA
    stage1 = bench_stage1_config(seed=args.seed)
    stage2 = bench_stage2_config(seed=args.seed)

    summary = {}
    for lam in grid:
        s1, s2 = method_configs(args.method, stage1, stage2, beta=beta, lam=lam)
        result = run_method(synth, s1, s2, args.seed, feature_dim=args.feature_dim)
        metrics = result.metrics_stage2.to_dict()
        _write_text(out / _lam_dirname(lam) / "metrics.json", _json_dumps(metrics))
        summary[f"{lam:g}"] = {
            "mean_accuracy": metrics["mean_accuracy"],
            "worst_group_accuracy": metrics["worst_group_accuracy"],
        }
        print(f"lambda={lam:g}  mean {metrics['mean_accuracy']:.4f}  "
              f"worst-group {metrics['worst_group_accuracy']:.4f}")
    best = max(summary, key=lambda k: (summary[k]["worst_group_accuracy"], -float(k)))
    _write_text(out / "sweep.json", _json_dumps(
        {"method": args.method, "beta": beta, "seed": args.seed,
         "grid": list(grid), "best_lambda": float(best), "results": summary}
    ))
    _update_manifest(out, "sweep", {
        "config_sha256": _sha256(config_text),
        "seed": args.seed,
        "artifacts": ["sweep.json"] + [f"{_lam_dirname(l)}/metrics.json" for l in grid],
    })
    print(f"best lambda: {best}")
    return 0


def _compare_cell(payload: tuple) -> tuple:
    """One (method, seed) pipeline run; module-level so it pickles."""
    method, seed, synth, stage1, stage2, beta, lam, feature_dim = payload
    s1, s2 = method_configs(method, stage1, stage2, beta=beta, lam=lam)
    result = run_method(synth, s1, s2, seed, feature_dim=feature_dim)
    return (method, seed,
            result.metrics_stage2.mean_accuracy,
            result.metrics_stage2.worst_group_accuracy)


def cmd_compare(args) -> int:
    out = Path(args.out)
    synth, config_text = _load_synth(args)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    methods = COMPARE_METHODS_FULL if args.full else (
        tuple(args.methods.split(",")) if args.methods else COMPARE_METHODS_DEFAULT
    )
    beta = args.beta if args.beta is not None else BENCH_BETA
    lam = args.lam if args.lam is not None else BENCH_LAMBDA
    spec = ExperimentSpec(
        synth=synth, stage1=bench_stage1_config(), stage2=bench_stage2_config(),
        seeds=seeds, out_dir=str(out), methods=methods, beta=beta, lam=lam,
        feature_dim=args.feature_dim,
    )

    cells = [(m, s, spec.synth, spec.stage1, spec.stage2, spec.beta, spec.lam,
              spec.feature_dim) for m in spec.methods for s in spec.seeds]
    workers = min(_thread_cap(), len(cells))
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_compare_cell, cells))
    else:
        rows = [_compare_cell(c) for c in cells]

    table = {}
    for method in spec.methods:
        means = [r[2] for r in rows if r[0] == method]
        wgas = [r[3] for r in rows if r[0] == method]
        table[method] = {
            "mean_accuracy": {"median": float(np.median(means)),
                              "min": float(min(means)), "max": float(max(means))},
            "worst_group_accuracy": {"median": float(np.median(wgas)),
                                     "min": float(min(wgas)), "max": float(max(wgas))},
        }
    _write_text(out / "compare.json", _json_dumps(
        {"seeds": list(seeds), "beta": beta, "lambda": lam, "methods": table}
    ))
    _update_manifest(out, "compare", {
        "config_sha256": _sha256(config_text),
        "seeds": list(seeds),
        "artifacts": ["compare.json"],
    })

    header = f"{'method':>16}  {'mean acc (med)':>14}  {'wga (med)':>10}  {'wga range':>15}"
    print(header)
    for method in spec.methods:
        stats = table[method]
        wga = stats["worst_group_accuracy"]
        print(f"{method:>16}  {stats['mean_accuracy']['median']:>14.4f}  "
              f"{wga['median']:>10.4f}  "
              f"{wga['min']:>7.4f}-{wga['max']:.4f}")
    return 0


# ---------------------------------------------------------------- parser


def _add_common(parser, seed_default=42):
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--config", default=None, help="JSON config path")
    parser.add_argument("--seed", type=int, default=seed_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccr-lab",
        description="Causally calibrated robust classifier: two-stage training "
                    "with decorrelation, counterfactual penalties, and IPW.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate ideal + observed synthetic data")
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train1", help="stage-1 training (encoder + head)")
    _add_common(p, seed_default=None)
    p.add_argument("--beta", type=float, default=None, help="DeCov coefficient")
    p.add_argument("--feature-dim", type=int, default=BENCH_FEATURE_DIM)
    p.set_defaults(func=cmd_train1)

    p = sub.add_parser("weights", help="estimate per-sample IPW weights")
    _add_common(p)
    p.add_argument("--estimator", required=True,
                   choices=["ccr", "jtt", "afr", "oracle", "none"])
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("train2", help="stage-2 head retraining")
    _add_common(p, seed_default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="causality coefficient")
    p.add_argument("--variant", choices=["paper", "pearl"], default=None)
    p.add_argument("--warm-start", type=lambda s: s.lower() in ("1", "true", "yes"),
                   default=None)
    p.set_defaults(func=cmd_train2)

    p = sub.add_parser("eval", help="group metrics on a held-out fvec file")
    _add_common(p)
    p.add_argument("--data", default=None, help="fvec path (default: OUT/ideal.fvec)")
    p.add_argument("--params", default=None, help="params path (default: OUT/params_stage2.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("attribute", help="occlusion attribution per input block")
    _add_common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--params", default=None)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("sweep", help="lambda sweep of the full pipeline")
    _add_common(p)
    p.add_argument("--grid", default=None, help="comma-separated lambda values")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--method", default="ccr")
    p.add_argument("--feature-dim", type=int, default=BENCH_FEATURE_DIM)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="method comparison over a seed list")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seeds", default="42", help="comma-separated seed list")
    p.add_argument("--methods", default=None, help="comma-separated method names")
    p.add_argument("--full", action="store_true",
                   help="run the full ablation grid (8 toggle rows + 2 weight variants)")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--feature-dim", type=int, default=BENCH_FEATURE_DIM)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DivergenceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (FileNotFoundError, FvecFormatError, ValueError, KeyError, TypeError,
            json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
