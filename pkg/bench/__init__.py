"""Synthetic graphs, experiment drivers and their result bundles."""

from bench.experiments import (
    ablation_experiment,
    convergence_trend,
    degree_and_timing_report,
    noise_attenuation_experiment,
    scaling_sweep,
    stability_experiment,
)
from bench.linkpred import link_prediction_eval
from bench.results import ExperimentResult
from bench.runner import run_seeds
from bench.sbm import SbmSpec, gen_sbm

__all__ = [
    "ExperimentResult",
    "SbmSpec",
    "ablation_experiment",
    "convergence_trend",
    "degree_and_timing_report",
    "gen_sbm",
    "link_prediction_eval",
    "noise_attenuation_experiment",
    "run_seeds",
    "scaling_sweep",
    "stability_experiment",
]
