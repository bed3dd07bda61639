"""Metrics, studies, probes and pairwise-comparison scaling."""

from .jnd import SIGMA_JND, ComparisonMatrix, JndScores, scale_jnd, simulate_comparisons
from .metrics import MetricReport, evaluate_model, ms_ssim_metric, psnr, ssim_metric
from .niqe import fit_pristine_model, niqe
from .study import ProbeResult, manifold_probe, sensitivity_study, stack_extractor

__all__ = [
    "SIGMA_JND", "ComparisonMatrix", "JndScores", "scale_jnd", "simulate_comparisons",
    "MetricReport", "evaluate_model", "ms_ssim_metric", "psnr", "ssim_metric",
    "fit_pristine_model", "niqe",
    "ProbeResult", "manifold_probe", "sensitivity_study", "stack_extractor",
]
