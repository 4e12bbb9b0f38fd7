"""Causally calibrated robust classifier over frozen feature representations.

Two-stage training: ERM with a covariance-decorrelation penalty, then
head-only retraining under an inverse-propensity-weighted loss with a
counterfactual necessity/sufficiency penalty. Includes a synthetic
spurious-correlation benchmark and a group-aware evaluation harness.
"""
from .core import (ClassifierHead, CounterfactualMask, FeatureMatrix,
                   FvecFormatError, LabeledDataset, ObservationMask, RngSeed,
                   dataset_from_fvec, dataset_to_fvec, read_fvec, write_fvec)
from .datagen import SyntheticConfig, bench_v1, generate_ideal, group_counts, subsample_observe
from .evaluation import (AttributionReport, MetricsReport, default_block_spec,
                         group_metrics, occlusion_attribution)
from .ipw import (PropensityTable, WeightVector, estimate_propensity_ccr,
                  weights_afr, weights_from_propensity, weights_jtt, weights_oracle)
from .losses import LossBreakdown, ce_loss_grad, decov_penalty_grad, stage2_loss_grad
from .model import (Encoder, counterfactual_probs, encode, head_probs,
                    init_parameters, params_from_json, params_to_json)
from .pipeline import (MethodResult, bench_stage1_config, bench_stage2_config,
                       compute_weights, method_configs, run_method, sweep_lambda)
from .pns import PnsBounds, pns_lower_bound, pns_penalty
from .train import (DivergenceError, TrainConfig, TrainHistory,
                    evaluate_stage1, train_stage1, train_stage2)

__all__ = [
    "ClassifierHead", "CounterfactualMask", "FeatureMatrix", "FvecFormatError",
    "LabeledDataset", "ObservationMask", "RngSeed", "dataset_from_fvec",
    "dataset_to_fvec", "read_fvec", "write_fvec",
    "SyntheticConfig", "bench_v1", "generate_ideal", "group_counts", "subsample_observe",
    "AttributionReport", "MetricsReport", "default_block_spec",
    "group_metrics", "occlusion_attribution",
    "PropensityTable", "WeightVector", "estimate_propensity_ccr",
    "weights_afr", "weights_from_propensity", "weights_jtt", "weights_oracle",
    "LossBreakdown", "ce_loss_grad", "decov_penalty_grad", "stage2_loss_grad",
    "Encoder", "counterfactual_probs", "encode", "head_probs",
    "init_parameters", "params_from_json", "params_to_json",
    "MethodResult", "bench_stage1_config", "bench_stage2_config",
    "compute_weights", "method_configs", "run_method", "sweep_lambda",
    "PnsBounds", "pns_lower_bound", "pns_penalty",
    "DivergenceError", "TrainConfig", "TrainHistory",
    "evaluate_stage1", "train_stage1", "train_stage2",
]

__version__ = "0.1.0"
