"""Acquisition functions over an unlabelled pool.

Every strategy scores all pool points (higher is more desirable to query)
and the selection is the argmax, ties going to the lowest pool index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import expit, ndtr, softmax

from .pgp import GH_NODES, MC_DRAWS, LatentPosterior
from .uncertainty import nec_bin, nec_multi, u_l_bin, u_l_multi_batch

# latent variances are floored here before entering measures that need var > 0
VAR_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class AcquisitionRequest:
    posterior: LatentPosterior
    predictive_probs: np.ndarray  # (m, L), latent-averaged
    rng_seed: int = 0
    link: str = "logistic"
    gh_nodes: int = GH_NODES
    mc_draws: int = MC_DRAWS

    def __post_init__(self):
        probs = np.asarray(self.predictive_probs, dtype=float)
        if probs.ndim != 2 or probs.shape[0] != self.posterior.n_points:
            raise ValueError("predictive_probs must be (n_pool, n_classes)")
        if probs.shape[0] and np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-6:
            raise ValueError("predictive probabilities must sum to one per point")
        object.__setattr__(self, "predictive_probs", probs)

    @property
    def size(self) -> int:
        return self.posterior.n_points


def _entropy(p: np.ndarray, axis: int = -1) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=axis)


def score_random(req: AcquisitionRequest) -> np.ndarray:
    return np.random.default_rng(req.rng_seed).random(req.size)


def score_bald(req: AcquisitionRequest) -> np.ndarray:
    """Predictive entropy minus expected entropy under the latent posterior."""
    post = req.posterior
    if post.is_binary:
        x, w = hermgauss(req.gh_nodes)
        w = w / np.sqrt(np.pi)
        g = post.mean[:, None] + np.sqrt(2.0 * post.var)[:, None] * x[None, :]
        p = expit(g) if req.link == "logistic" else ndtr(g)
        expected = (_entropy(np.stack([p, 1.0 - p], axis=-1)) * w).sum(axis=1)
        return _entropy(req.predictive_probs) - expected
    rng = np.random.default_rng(req.rng_seed)
    eps = rng.standard_normal((req.mc_draws,) + post.mean.shape)
    probs = softmax(post.mean + np.sqrt(post.var) * eps, axis=-1)
    return _entropy(probs.mean(axis=0)) - _entropy(probs).mean(axis=0)


def score_max_ent(req: AcquisitionRequest) -> np.ndarray:
    # latent Gaussian entropy is increasing in the variance
    var = req.posterior.var
    return var if var.ndim == 1 else var.sum(axis=1)


def score_entropy(req: AcquisitionRequest) -> np.ndarray:
    return _entropy(req.predictive_probs)


def score_least_conf(req: AcquisitionRequest) -> np.ndarray:
    return 1.0 - req.predictive_probs.max(axis=1)


def score_margin(req: AcquisitionRequest) -> np.ndarray:
    top2 = -np.sort(-req.predictive_probs, axis=1)[:, :2]
    return -(top2[:, 0] - top2[:, 1])


def score_u_l(req: AcquisitionRequest) -> np.ndarray:
    post = req.posterior
    var = np.maximum(post.var, VAR_FLOOR)
    if post.is_binary:
        return np.array([u_l_bin(m, v, req.link) for m, v in zip(post.mean, var)])
    return u_l_multi_batch(post.mean, var)


def score_necessity(req: AcquisitionRequest) -> np.ndarray:
    post = req.posterior
    if post.is_binary:
        return -np.asarray(nec_bin(post.mean, post.var), dtype=float)
    return -nec_multi(post.mean, post.var)


SCORERS: dict[str, Callable[[AcquisitionRequest], np.ndarray]] = {
    "random": score_random,
    "bald": score_bald,
    "max_ent": score_max_ent,
    "entropy": score_entropy,
    "least_conf": score_least_conf,
    "margin": score_margin,
    "u_l": score_u_l,
    "necessity": score_necessity,
}


def select(scores: np.ndarray) -> int:
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("empty pool")
    if not np.all(np.isfinite(scores)):
        raise ValueError("acquisition scores must be finite")
    return int(np.argmax(scores))


def acquire(name: str, req: AcquisitionRequest) -> int:
    """Pool index chosen by the named strategy."""
    try:
        scorer = SCORERS[name]
    except KeyError:
        raise ValueError(f"unknown acquisition {name!r}; choose from {sorted(SCORERS)}") from None
    if req.size == 0:
        raise ValueError("empty pool")
    return select(scorer(req))


def acquire_random(req): return acquire("random", req)
def acquire_bald(req): return acquire("bald", req)
def acquire_max_ent_latent(req): return acquire("max_ent", req)
def acquire_entropy(req): return acquire("entropy", req)
def acquire_least_conf(req): return acquire("least_conf", req)
def acquire_margin(req): return acquire("margin", req)
def acquire_u_l(req): return acquire("u_l", req)
def acquire_necessity(req): return acquire("necessity", req)
