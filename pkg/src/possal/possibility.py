"""Gaussian and tabulated possibility functions.

A possibility function maps a parameter space into [0, 1] with supremum 1.
Gaussian possibilities are parameterised by mean and precision so that the
uninformative case (zero precision) is representable; tabulated possibilities
on uniform grids serve as numeric oracles for the sup-based calculus.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

# smallest eigenvalue below this fraction of the largest => covariance undefined
SINGULAR_RTOL = 1e-10
_SYM_TOL = 1e-9
_PSD_TOL = 1e-9
_NORM_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _is_singular(eigvals: np.ndarray) -> bool:
    top = float(np.max(eigvals)) if eigvals.size else 0.0
    return top <= 0.0 or float(np.min(eigvals)) < SINGULAR_RTOL * top


def _inverse_if_regular(matrix: np.ndarray) -> np.ndarray | None:
    sym = 0.5 * (matrix + matrix.T)
    if _is_singular(np.linalg.eigvalsh(sym)):
        return None
    factor = scipy.linalg.cho_factor(sym, lower=True)
    inv = scipy.linalg.cho_solve(factor, np.eye(sym.shape[0]))
    return 0.5 * (inv + inv.T)


@dataclass(frozen=True)
class CovarianceReport:
    mode: np.ndarray
    precision_matrix: np.ndarray
    covariance_matrix: np.ndarray | None

    @property
    def defined(self) -> bool:
        return self.covariance_matrix is not None


@dataclass(frozen=True, eq=False)
class GaussianPossibility:
    """``exp(-0.5 (theta - mean)^T precision (theta - mean))``.

    The precision only needs to be positive semidefinite; ``precision = 0``
    is the uninformative possibility that equals 1 everywhere.
    """

    mean: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        prec = np.atleast_2d(np.asarray(self.precision, dtype=float))
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        n = mean.shape[0]
        if prec.shape != (n, n):
            raise ValueError(f"precision shape {prec.shape} does not match mean dimension {n}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(prec))):
            raise ValueError("mean and precision must be finite")
        scale = max(1.0, float(np.max(np.abs(prec))))
        if np.max(np.abs(prec - prec.T)) > _SYM_TOL * scale:
            raise ValueError("precision must be symmetric")
        prec = 0.5 * (prec + prec.T)
        if n and np.min(np.linalg.eigvalsh(prec)) < -_PSD_TOL * scale:
            raise ValueError("precision must be positive semidefinite")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "precision", _frozen(prec))

    @classmethod
    def from_covariance(cls, mean, covariance) -> GaussianPossibility:
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        prec = _inverse_if_regular(cov)
        if prec is None:
            raise ValueError("covariance must be positive definite")
        return cls(mean, prec)

    @classmethod
    def uninformative(cls, dim: int) -> GaussianPossibility:
        return cls(np.zeros(dim), np.zeros((dim, dim)))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def evaluate(self, theta) -> np.ndarray | float:
        """Credibility of ``theta``; accepts a single point or an (m, n) batch."""
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim <= 1
        pts = np.atleast_2d(theta.reshape(1, -1) if single else theta)
        if pts.shape[1] != self.dim:
            raise ValueError(f"point dimension {pts.shape[1]} != possibility dimension {self.dim}")
        diff = pts - self.mean
        quad = np.einsum("ij,jk,ik->i", diff, self.precision, diff)
        out = np.minimum(np.exp(-0.5 * np.maximum(quad, 0.0)), 1.0)
        return float(out[0]) if single else out

    def mode(self) -> np.ndarray:
        # for singular precision the argmax is a set; the stored mean represents it
        return self.mean.copy()

    def covariance(self) -> np.ndarray | None:
        return _inverse_if_regular(self.precision)

    def report(self) -> CovarianceReport:
        return CovarianceReport(self.mode(), self.precision.copy(), self.covariance())


def evaluate(gp: GaussianPossibility, theta) -> np.ndarray | float:
    return gp.evaluate(theta)


def mode(gp: GaussianPossibility) -> np.ndarray:
    return gp.mode()


def _index_set(indices, n: int, name: str) -> np.ndarray:
    idx = np.atleast_1d(np.asarray(indices, dtype=int))
    if idx.ndim != 1:
        raise ValueError(f"{name} must be a flat index set")
    if np.any(idx < 0) or np.any(idx >= n):
        raise IndexError(f"{name} out of range for dimension {n}")
    if len(np.unique(idx)) != len(idx):
        raise ValueError(f"{name} contains duplicates")
    return idx


def condition(gp: GaussianPossibility, observed_indices, observed_values) -> GaussianPossibility:
    """Possibility of the unobserved components given the observed ones.

    Works in precision form: the conditional precision is the unobserved block
    of the joint precision, which equals the inverse of the Schur complement
    ``S11 - S12 S22^-1 S21`` whenever the covariance exists.
    """
    obs = _index_set(observed_indices, gp.dim, "observed_indices")
    values = np.atleast_1d(np.asarray(observed_values, dtype=float))
    if values.shape != obs.shape:
        raise ValueError("observed_values must match observed_indices")
    keep = np.setdiff1d(np.arange(gp.dim), obs)
    if keep.size == 0:
        raise ValueError("nothing left to condition")
    p11 = gp.precision[np.ix_(keep, keep)]
    p12 = gp.precision[np.ix_(keep, obs)]
    if _is_singular(np.linalg.eigvalsh(p11)):
        raise np.linalg.LinAlgError("conditional precision block is singular")
    shift = scipy.linalg.solve(p11, p12 @ (values - gp.mean[obs]), assume_a="pos")
    return GaussianPossibility(gp.mean[keep] - shift, p11)


def marginalize(gp: GaussianPossibility, keep_indices) -> GaussianPossibility:
    """Sup over the dropped components.

    The marginal precision is the Schur complement of the dropped block.
    A pseudo-inverse is exact here because, for a PSD precision, the columns
    of the cross block always lie in the range of the dropped block.
    """
    keep = _index_set(keep_indices, gp.dim, "keep_indices")
    if keep.size == 0:
        raise ValueError("keep_indices must be non-empty")
    drop = np.setdiff1d(np.arange(gp.dim), keep)
    pkk = gp.precision[np.ix_(keep, keep)]
    if drop.size == 0:
        return GaussianPossibility(gp.mean[keep], pkk)
    pkd = gp.precision[np.ix_(keep, drop)]
    pdd = gp.precision[np.ix_(drop, drop)]
    marg = pkk - pkd @ np.linalg.pinv(pdd, hermitian=True) @ pkd.T
    return GaussianPossibility(gp.mean[keep], 0.5 * (marg + marg.T))


def linear_map(gp: GaussianPossibility, F) -> GaussianPossibility:
    """Push-forward through ``theta -> F theta``: mean ``F mu``, covariance ``F S F^T``."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape[1] != gp.dim:
        raise ValueError(f"F has {F.shape[1]} columns, possibility has dimension {gp.dim}")
    cov = gp.covariance()
    if cov is None:
        if F.shape[0] == F.shape[1] and not _is_singular(np.abs(np.linalg.svd(F, compute_uv=False))):
            # invertible change of variables keeps a (possibly singular) precision
            F_inv = np.linalg.inv(F)
            return GaussianPossibility(F @ gp.mean, F_inv.T @ gp.precision @ F_inv)
        raise np.linalg.LinAlgError("covariance undefined and F is not invertible")
    out_cov = F @ cov @ F.T
    prec = _inverse_if_regular(out_cov)
    if prec is None:
        raise np.linalg.LinAlgError("mapped covariance is singular; F must have full row rank")
    return GaussianPossibility(F @ gp.mean, prec)


@dataclass(frozen=True, eq=False)
class GridPossibility:
    """Possibility tabulated on a uniform tensor grid in one to three dimensions."""

    axes: tuple
    values: np.ndarray

    def __post_init__(self):
        axes = tuple(_frozen(np.asarray(ax, dtype=float).ravel()) for ax in self.axes)
        if not 1 <= len(axes) <= 3:
            raise ValueError("grid must have between 1 and 3 axes")
        for ax in axes:
            if ax.size < 2:
                raise ValueError("each axis needs at least two points")
            steps = np.diff(ax)
            if np.any(steps <= 0) or np.ptp(steps) > 1e-6 * steps[0]:
                raise ValueError("axes must be increasing with uniform spacing")
        values = np.asarray(self.values, dtype=float)
        if values.shape != tuple(ax.size for ax in axes):
            raise ValueError(f"values shape {values.shape} does not match grid")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        if values.min() < -_NORM_TOL or values.max() > 1 + _NORM_TOL:
            raise ValueError("values must lie in [0, 1]")
        if abs(values.max() - 1.0) > _NORM_TOL:
            raise ValueError(f"possibility must have maximum 1, got {values.max()!r}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", _frozen(np.clip(values, 0.0, 1.0)))

    @classmethod
    def tabulate(cls, func: Callable, axes: Sequence, normalize: bool = True) -> GridPossibility:
        """Evaluate ``func(*coords)`` on the mesh (ij indexing) and optionally rescale to max 1."""
        axes = tuple(np.asarray(ax, dtype=float) for ax in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        values = np.broadcast_to(np.asarray(func(*mesh), dtype=float), mesh[0].shape)
        if normalize:
            top = values.max()
            if not top > 0:
                raise ValueError("function is zero on the whole grid")
            values = values / top
        return cls(axes, values)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([ax[1] - ax[0] for ax in self.axes])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def argmax_index(self) -> tuple:
        # np.argmax returns the first flat index, i.e. lowest grid index on ties
        return np.unravel_index(int(np.argmax(self.values)), self.values.shape)

    def mode(self) -> np.ndarray:
        idx = self.argmax_index()
        return np.array([ax[i] for ax, i in zip(self.axes, idx)])

    def marginal(self, keep) -> GridPossibility:
        keep = sorted(np.atleast_1d(keep).tolist())
        drop = tuple(i for i in range(self.ndim) if i not in keep)
        return GridPossibility(tuple(self.axes[i] for i in keep), self.values.max(axis=drop))


def bayes_update(prior: GridPossibility, likelihood) -> GridPossibility:
    """Posterior possibility ``p f / max(p f)`` for an observation with likelihood ``p``."""
    lik = np.asarray(likelihood, dtype=float)
    if lik.shape != prior.values.shape:
        raise ValueError("likelihood must be tabulated on the prior grid")
    if np.any(lik < 0) or not np.all(np.isfinite(lik)):
        raise ValueError("likelihood values must be finite and non-negative")
    joint = lik * prior.values
    top = joint.max()
    if not top > 0:
        raise ValueError("observation is impossible under the prior support")
    return GridPossibility(prior.axes, joint / top)


def precision_at_mode(f: GridPossibility, curvature_tol: float | None = None) -> CovarianceReport:
    """Finite-difference Hessian of ``-log f`` at the grid mode.

    Central differences use the grid spacing as step. Curvature below
    ``curvature_tol`` (default ``10 * max(spacing)**2``, the resolution of a
    second difference on this grid) counts as zero, in which case the
    covariance is reported as undefined.
    """
    idx = np.array(f.argmax_index())
    shape = np.array(f.values.shape)
    if np.any(idx == 0) or np.any(idx == shape - 1):
        raise ValueError("mode lies on the grid boundary")
    h = f.spacing
    n = f.ndim
    window = f.values[tuple(slice(i - 1, i + 2) for i in idx)]
    with np.errstate(divide="ignore"):
        logw = np.log(window)
    if not np.all(np.isfinite(logw)):
        raise ValueError("possibility vanishes next to the mode; log is not finite")

    def at(offset):
        return logw[tuple(1 + o for o in offset)]

    hess = np.empty((n, n))
    for i, j in itertools.product(range(n), repeat=2):
        if j < i:
            continue
        if i == j:
            e = np.zeros(n, dtype=int)
            e[i] = 1
            hess[i, i] = (at(e) - 2.0 * at(0 * e) + at(-e)) / h[i] ** 2
        else:
            ei = np.zeros(n, dtype=int)
            ej = np.zeros(n, dtype=int)
            ei[i] = 1
            ej[j] = 1
            val = (at(ei + ej) - at(ei - ej) - at(-ei + ej) + at(-ei - ej)) / (4.0 * h[i] * h[j])
            hess[i, j] = hess[j, i] = val
    prec = -hess
    if curvature_tol is None:
        curvature_tol = 10.0 * float(np.max(h)) ** 2
    eig = np.linalg.eigvalsh(prec)
    cov = None if float(np.min(eig)) <= curvature_tol else _inverse_if_regular(prec)
    return CovarianceReport(f.mode(), prec, cov)
