"""Bayesian regression under the infinite-width limit of one-hidden-layer networks with stable output weights."""

__version__ = "0.1.0"

from .cones import PartitionTable, partition_table, q_exact_1d, same_side_prob
from .data import Dataset, FunctionSpec, gen_function, load_csv, simulate_experiment, split
from .gp import gp_fit_predict
from .kernel import KernelMatrix, LatentState, assemble_q
from .mcmc import ChainConfig, PredictiveDraws, conditional_gaussian, run_chain
from .model import CvResult, cv_grid, fit_predict, mae
from .partitions import canonicalize, discover_mc, enumerate_1d, enumerate_2d
from .stable import RngStream, StableParams

__all__ = [
    "ChainConfig", "CvResult", "Dataset", "FunctionSpec", "KernelMatrix", "LatentState",
    "PartitionTable", "PredictiveDraws", "RngStream", "StableParams", "assemble_q",
    "canonicalize", "conditional_gaussian", "cv_grid", "discover_mc", "enumerate_1d",
    "enumerate_2d", "fit_predict", "gen_function", "gp_fit_predict", "load_csv", "mae",
    "partition_table", "q_exact_1d", "run_chain", "same_side_prob", "simulate_experiment",
    "split",
]
