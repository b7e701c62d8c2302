"""Pool-based active-learning runs and experiment orchestration."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..acquisition import AcquisitionRequest, acquire
from ..pgp import (ConvergenceError, RbfKernel, classify_binary, classify_multiclass,
                   fit_binary_laplace, fit_multiclass_laplace, predict_prob_averaged,
                   predict_prob_mode, select_lengthscale)
from .config import ExperimentConfig
from .datasets import Dataset

log = logging.getLogger(__name__)

# independent random streams per run
POOL, HOT_START, TEST, ACQUISITION, PREDICTION = range(5)


def stream(run_seed: int, component: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([run_seed, component]))


@dataclass
class RunRecord:
    dataset: str
    acquisition: str
    run_index: int
    run_seed: int
    hot_start: list = field(default_factory=list)
    queried: list = field(default_factory=list)
    accuracies: list = field(default_factory=list)
    labeled: list = field(default_factory=list)
    test: list = field(default_factory=list)
    n_fits: int = 0
    failed: bool = False
    reason: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> RunRecord:
        return cls(**json.loads(line))


class Learner:
    """Fits the Laplace GP classifier on a labelled subset and predicts latents."""

    def __init__(self, dataset: Dataset, kernel: RbfKernel, link: str):
        self.dataset = dataset
        self.kernel = kernel
        self.link = link
        self.binary = dataset.n_classes == 2

    def fit(self, idx):
        X = self.dataset.features[idx]
        y = self.dataset.labels[idx]
        if self.binary:
            return fit_binary_laplace(X, 2.0 * y - 1.0, self.kernel, self.link)
        return fit_multiclass_laplace(X, y, self.kernel, self.dataset.n_classes)

    def posterior(self, model, idx):
        X = self.dataset.features[idx]
        return classify_binary(model, X) if self.binary else classify_multiclass(model, X)

    def accuracy(self, model, idx) -> float:
        post = self.posterior(model, idx)
        pred = np.argmax(predict_prob_mode(post, self.link), axis=1)
        return float(np.mean(pred == self.dataset.labels[idx]))


def resolve_kernel(config: ExperimentConfig, dataset: Dataset) -> RbfKernel:
    opts = dict(config.kernel)
    sv = float(opts.get("signal_variance", 1.0))
    ls = opts.get("lengthscale")
    if ls is None:
        if dataset.n_classes != 2:
            raise ValueError("lengthscale selection is only available for binary datasets")
        rng = np.random.default_rng(np.random.SeedSequence([config.master_seed, 99]))
        sub = rng.choice(len(dataset), size=min(len(dataset), 300), replace=False)
        ls = select_lengthscale(dataset.features[sub], 2.0 * dataset.labels[sub] - 1.0,
                                config.lengthscale_grid, sv, config.link)
        log.info("selected lengthscale %s for %s", ls, config.dataset_name)
    return RbfKernel(float(ls), sv, config.jitter)


def run_active_learning(config: ExperimentConfig, dataset: Dataset, acquisition: str,
                        run_seed: int, run_index: int = 0, kernel: RbfKernel | None = None) -> RunRecord:
    """One run: sample a pool, hot-start with one point per class, then query ``n_queries`` times."""
    kernel = kernel or resolve_kernel(config, dataset)
    rec = RunRecord(config.dataset_name, acquisition, run_index, run_seed)
    m = len(dataset)
    pool = stream(run_seed, POOL).choice(m, size=config.train_pool_size, replace=False)
    rest = np.setdiff1d(np.arange(m), pool)
    test = np.sort(stream(run_seed, TEST).choice(rest, size=config.test_size, replace=False))
    hot_rng = stream(run_seed, HOT_START)
    labeled = []
    for c in range(dataset.n_classes):
        members = [i for i in pool if dataset.labels[i] == c]
        if not members:
            rec.failed, rec.reason = True, f"class {dataset.label_names[c]!r} absent from pool"
            return rec
        labeled.append(int(members[hot_rng.integers(len(members))]))
    unlabeled = [int(i) for i in pool if i not in set(labeled)]
    rec.hot_start = list(labeled)
    rec.test = test.tolist()
    learner = Learner(dataset, kernel, config.link)
    acq_rng = stream(run_seed, ACQUISITION)
    pred_rng = stream(run_seed, PREDICTION)
    try:
        for step in range(config.n_queries + 1):
            model = learner.fit(labeled)
            rec.n_fits += 1
            rec.accuracies.append(learner.accuracy(model, test))
            if step == config.n_queries:
                break
            post = learner.posterior(model, unlabeled)
            pred_seed = int(pred_rng.integers(2**32))
            req = AcquisitionRequest(
                post,
                predict_prob_averaged(post, config.link, seed=pred_seed, gh_nodes=config.gh_nodes,
                                      n_draws=config.mc_draws),
                rng_seed=int(acq_rng.integers(2**32)),
                link=config.link,
                gh_nodes=config.gh_nodes,
                mc_draws=config.mc_draws,
            )
            pick = unlabeled.pop(acquire(acquisition, req))
            labeled.append(pick)
            rec.queried.append(pick)
    except (ConvergenceError, np.linalg.LinAlgError) as exc:
        rec.failed, rec.reason = True, f"model fit failed at fit {rec.n_fits + 1}: {exc}"
        log.warning("%s/%s run %d failed: %s", rec.dataset, acquisition, run_index, exc)
    rec.labeled = list(labeled)
    return rec


def _run_task(args):
    config, dataset, kernel, acquisition, run_index, run_seed = args
    return run_active_learning(config, dataset, acquisition, run_seed, run_index, kernel)


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict[str, list[RunRecord]]:
    """Every (acquisition, run) pair; records are written as JSON lines per acquisition."""
    dataset = config.load_dataset()
    kernel = resolve_kernel(config, dataset)
    tasks = [(config, dataset, kernel, acq, i, seed)
             for acq in config.acquisitions for i, seed in enumerate(config.run_seeds())]
    if config.n_workers > 1:
        with ProcessPoolExecutor(config.n_workers) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        records = [_run_task(t) for t in tasks]
    grouped: dict[str, list[RunRecord]] = {acq: [] for acq in config.acquisitions}
    for rec in records:
        grouped[rec.acquisition].append(rec)
    if out_dir is not None:
        write_results(config, grouped, out_dir, kernel)
    return grouped


def write_results(config: ExperimentConfig, grouped, out_dir, kernel: RbfKernel | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for acq, recs in grouped.items():
        path = out / f"{config.dataset_name}__{acq}.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            for rec in sorted(recs, key=lambda r: r.run_index):
                fh.write(rec.to_json() + "\n")
    meta = config.to_dict()
    if kernel is not None:
        meta["resolved_kernel"] = {"lengthscale": kernel.lengthscale,
                                   "signal_variance": kernel.signal_variance}
    with (out / f"{config.dataset_name}__config.json").open("w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_results(results_dir) -> dict[tuple[str, str], list[RunRecord]]:
    out: dict[tuple[str, str], list[RunRecord]] = {}
    for path in sorted(Path(results_dir).glob("*__*.jsonl")):
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = RunRecord.from_json(line)
                    out.setdefault((rec.dataset, rec.acquisition), []).append(rec)
    return out
