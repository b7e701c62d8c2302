"""Datasets, the active-learning loop, summaries and the command line."""

from .config import ConfigError, ExperimentConfig
from .datasets import Dataset, DatasetError, gen_blobs, gen_block, load_csv, save_csv
from .loop import RunRecord, load_results, run_active_learning, run_experiment
from .metrics import SummaryTable, summarize

__all__ = ["ConfigError", "ExperimentConfig", "Dataset", "DatasetError", "gen_blobs", "gen_block",
           "load_csv", "save_csv", "RunRecord", "load_results", "run_active_learning",
           "run_experiment", "SummaryTable", "summarize"]
