"""Experiment configuration, read from JSON documents."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..acquisition import SCORERS
from ..pgp import GH_NODES, JITTER, MC_DRAWS
from .datasets import Dataset, gen_blobs, gen_block, load_csv

DEFAULT_LENGTHSCALE_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: dict
    acquisitions: list
    n_runs: int
    n_queries: int
    train_pool_size: int
    test_size: int
    kernel: dict = field(default_factory=lambda: {"lengthscale": 1.0, "signal_variance": 1.0})
    link: str = "logistic"
    jitter: float = JITTER
    master_seed: int = 0
    n_workers: int = 1
    gh_nodes: int = GH_NODES
    mc_draws: int = MC_DRAWS
    lengthscale_grid: list = field(default_factory=lambda: list(DEFAULT_LENGTHSCALE_GRID))
    name: str | None = None
    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        unknown = [a for a in self.acquisitions if a not in SCORERS]
        if unknown or not self.acquisitions:
            raise ConfigError(f"unknown or missing acquisitions {unknown}; choose from {sorted(SCORERS)}")
        if self.link not in ("logistic", "probit"):
            raise ConfigError(f"unknown link {self.link!r}")
        if self.n_runs < 1 or self.n_queries < 0 or self.train_pool_size < 1 or self.test_size < 1:
            raise ConfigError("run counts and sizes must be positive")
        if self.n_queries >= self.train_pool_size:
            raise ConfigError("n_queries must be smaller than train_pool_size")
        if "kind" not in self.dataset:
            raise ConfigError("dataset needs a 'kind'")

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> ExperimentConfig:
        names = {f.name for f in fields(cls)} - {"base_dir"}
        extra = set(doc) - names
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        try:
            return cls(**doc, base_dir=str(base_dir))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc.pop("base_dir")
        return doc

    def load_dataset(self) -> Dataset:
        opts = dict(self.dataset)
        kind = opts.pop("kind")
        if kind == "csv":
            path = Path(opts.pop("path"))
            if not path.is_absolute():
                path = Path(self.base_dir) / path
            ds = load_csv(path, opts.pop("name", None))
        elif kind in ("block_center", "block_corner"):
            ds = gen_block(kind.split("_")[1], seed=opts.pop("seed", 0), **opts.pop("params", {}))
        elif kind == "blobs":
            ds = gen_blobs(seed=opts.pop("seed", 0), **opts.pop("params", {}))
        else:
            raise ConfigError(f"unknown dataset kind {kind!r}")
        if opts:
            raise ConfigError(f"unused dataset fields {sorted(opts)}")
        ds.check_experiment_ready()
        if self.train_pool_size + self.test_size > len(ds):
            raise ConfigError(f"pool ({self.train_pool_size}) + test ({self.test_size}) exceeds "
                              f"dataset size {len(ds)}")
        return ds

    @property
    def dataset_name(self) -> str:
        if self.name:
            return self.name
        kind = self.dataset["kind"]
        if kind == "csv":
            return self.dataset.get("name") or Path(self.dataset["path"]).stem
        return kind

    def run_seeds(self) -> list[int]:
        children = np.random.SeedSequence(self.master_seed).spawn(self.n_runs)
        return [int(c.generate_state(1, np.uint64)[0]) for c in children]
