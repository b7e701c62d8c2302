"""Possibilistic Gaussian processes: regression and Laplace-approximated classification.

Binary labels are encoded as -1/+1 and latent values pass through a logistic
or probit link. Multiclass latents are stacked class-major, i.e.
``g = (g^1_1..g^1_n, g^2_1..g^2_n, ...)``, and pass through the softmax.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from numpy.polynomial.hermite import hermgauss
from scipy.spatial.distance import cdist
from scipy.special import expit, log_ndtr, logsumexp, ndtr, softmax
from scipy.stats import norm

JITTER = 1e-8
GH_NODES = 32
MC_DRAWS = 256


class ConvergenceError(RuntimeError):
    """Newton iteration did not reach stationarity."""

    def __init__(self, message: str, grad_norm: float, n_iter: int):
        super().__init__(f"{message} (gradient norm {grad_norm:.3e} after {n_iter} iterations)")
        self.grad_norm = grad_norm
        self.n_iter = n_iter


def _points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("inputs must be an (n, d) array")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs must be finite")
    return X


@dataclass(frozen=True)
class RbfKernel:
    lengthscale: float = 1.0
    signal_variance: float = 1.0
    jitter: float = JITTER  # relative to signal_variance

    def __post_init__(self):
        if not (np.isfinite(self.jitter) and self.jitter >= 0):
            raise ValueError(f"jitter must be non-negative, got {self.jitter!r}")
        for name in ("lengthscale", "signal_variance"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val!r}")

    def __call__(self, X, X2=None) -> np.ndarray:
        X = _points(X)
        X2 = X if X2 is None else _points(X2)
        if X.shape[1] != X2.shape[1]:
            raise ValueError("input dimensions differ")
        sq = cdist(X, X2, "sqeuclidean")
        return self.signal_variance * np.exp(-0.5 * sq / self.lengthscale**2)

    def diag(self, X) -> np.ndarray:
        return np.full(_points(X).shape[0], float(self.signal_variance))

    def prior_matrix(self, X) -> np.ndarray:
        """Kernel matrix with the diagonal jitter used for every factorisation."""
        K = self(X)
        K[np.diag_indices_from(K)] += self.jitter * self.signal_variance
        return K


def kernel_matrix(kernel: RbfKernel, X, X2=None) -> np.ndarray:
    return kernel(X, X2)


@dataclass(frozen=True, eq=False)
class LatentPosterior:
    """Per test point latent mean and variance.

    Binary posteriors hold ``(m,)`` arrays; multiclass posteriors ``(m, L)``.
    """

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        var = np.asarray(self.var, dtype=float)
        if mean.shape != var.shape or mean.ndim not in (1, 2):
            raise ValueError("mean and var must share shape (m,) or (m, L)")
        if np.any(var < -1e-8):
            warnings.warn(f"negative posterior variance {var.min():.3e} clamped to 0", RuntimeWarning)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", np.maximum(var, 0.0))

    @property
    def is_binary(self) -> bool:
        return self.mean.ndim == 1

    @property
    def n_points(self) -> int:
        return self.mean.shape[0]

    @property
    def n_classes(self) -> int:
        return 2 if self.is_binary else self.mean.shape[1]

    def subset(self, idx) -> LatentPosterior:
        return LatentPosterior(self.mean[idx], self.var[idx])


# -- regression ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RegressionModel:
    train_inputs: np.ndarray
    train_targets: np.ndarray
    kernel: RbfKernel
    noise_variance: float
    factor: np.ndarray | None  # lower Cholesky factor of K + noise I
    alpha: np.ndarray | None  # (K + noise I)^-1 y


def fit_regression(X, y, kernel: RbfKernel, noise_variance: float = 0.0) -> RegressionModel:
    y = np.asarray(y, dtype=float).ravel()
    X = _points(X) if y.size else np.zeros((0, 1))
    if X.shape[0] != y.size:
        raise ValueError("inputs and targets differ in length")
    if noise_variance < 0:
        raise ValueError("noise_variance must be non-negative")
    if y.size == 0:
        return RegressionModel(X, y, kernel, noise_variance, None, None)
    A = kernel.prior_matrix(X) + noise_variance * np.eye(y.size)
    try:
        chol = scipy.linalg.cholesky(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("K + noise I is not positive definite") from exc
    alpha = scipy.linalg.cho_solve((chol, True), y)
    return RegressionModel(X, y, kernel, noise_variance, chol, alpha)


def regress(model: RegressionModel, X_t) -> LatentPosterior:
    """Posterior mean ``K_t A^-1 y`` and variance ``diag(K_tt - K_t A^-1 K_t^T)``, ``A = K + noise I``."""
    X_t = _points(X_t)
    prior_var = model.kernel.diag(X_t)
    if model.factor is None:
        return LatentPosterior(np.zeros(X_t.shape[0]), prior_var)
    Kt = model.kernel(X_t, model.train_inputs)
    v = scipy.linalg.solve_triangular(model.factor, Kt.T, lower=True)
    return LatentPosterior(Kt @ model.alpha, prior_var - np.sum(v * v, axis=0))


# -- binary classification ----------------------------------------------------

def binary_log_lik(g, y, link: str = "logistic"):
    """Return ``(log p(y|g), d/dg log p, -d2/dg2 log p)`` for labels in {-1, +1}."""
    g = np.asarray(g, dtype=float)
    y = np.asarray(y, dtype=float)
    z = y * g
    if link == "logistic":
        pi = expit(g)
        logp = -np.logaddexp(0.0, -z)
        grad = 0.5 * (y + 1.0) - pi
        W = pi * (1.0 - pi)
    elif link == "probit":
        logp = log_ndtr(z)
        ratio = np.exp(norm.logpdf(z) - logp)
        grad = y * ratio
        W = ratio * (ratio + z)
    else:
        raise ValueError(f"unknown link {link!r}")
    return float(np.sum(logp)), grad, W


@dataclass(frozen=True, eq=False)
class BinaryClassifierModel:
    train_inputs: np.ndarray
    train_labels: np.ndarray
    kernel: RbfKernel
    link: str
    K: np.ndarray
    laplace_mode: np.ndarray
    W: np.ndarray
    grad_log_lik: np.ndarray
    chol_B: np.ndarray  # lower Cholesky factor of I + W^1/2 K W^1/2
    log_marginal: float
    n_iter: int
    psi_trace: tuple = ()  # objective after each accepted step, starting at g = 0

    @property
    def posterior_mode(self) -> np.ndarray:
        return self.laplace_mode

    def posterior_precision(self) -> np.ndarray:
        """Precision of the Laplace possibility, ``K^-1 + W``."""
        return np.linalg.inv(self.K) + np.diag(self.W)


def _binary_newton_parts(K, g, W, grad):
    sW = np.sqrt(W)
    B = np.eye(K.shape[0]) + sW[:, None] * K * sW[None, :]
    L = scipy.linalg.cholesky(B, lower=True)
    b = W * g + grad
    c = scipy.linalg.cho_solve((L, True), sW * (K @ b))
    return b - sW * c, L


def fit_binary_laplace(inputs, labels, kernel: RbfKernel, link: str = "logistic",
                       tol: float = 1e-8, max_iter: int = 100) -> BinaryClassifierModel:
    """Mode and curvature of the latent posterior by Newton's method.

    Iterates until ``||grad Psi||_inf <= tol`` and ``||g - K grad log p||_inf <= tol``,
    halving a step up to ten times whenever it lowers Psi.
    """
    X = _points(inputs)
    y = np.asarray(labels, dtype=float).ravel()
    if y.size != X.shape[0]:
        raise ValueError("inputs and labels differ in length")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("binary labels must be -1 or +1")
    K = kernel.prior_matrix(X)
    n = y.size
    a = np.zeros(n)
    g = np.zeros(n)
    logp, grad, W = binary_log_lik(g, y, link)
    psi = logp
    trace = [psi]
    for it in range(max_iter + 1):
        grad_norm = float(np.max(np.abs(grad - a)))
        if grad_norm <= tol and np.max(np.abs(g - K @ grad)) <= tol:
            break
        if it == max_iter:
            raise ConvergenceError("binary Laplace fit did not converge", grad_norm, it)
        a_new, _ = _binary_newton_parts(K, g, W, grad)
        step = a_new - a
        t = 1.0
        for _ in range(11):
            a_try = a + t * step
            g_try = K @ a_try
            logp_try, grad_try, W_try = binary_log_lik(g_try, y, link)
            psi_try = logp_try - 0.5 * a_try @ g_try
            if psi_try >= psi - 1e-12 * (1.0 + abs(psi)):
                break
            t *= 0.5
        a, g, grad, W, psi = a_try, g_try, grad_try, W_try, psi_try
        trace.append(psi)
    sW = np.sqrt(W)
    L = scipy.linalg.cholesky(np.eye(n) + sW[:, None] * K * sW[None, :], lower=True)
    log_marginal = psi - float(np.sum(np.log(np.diag(L))))
    return BinaryClassifierModel(X, y, kernel, link, K, g, W, grad, L, log_marginal, it, tuple(trace))


def classify_binary(model: BinaryClassifierModel, X_t) -> LatentPosterior:
    """Latent posterior at test points: mean ``K_t grad log p(y|g)``, variance ``K_tt - K_t (K + W^-1)^-1 K_t^T``.

    The variance uses ``(K + W^-1)^-1 = W^1/2 B^-1 W^1/2`` so that W may vanish.
    """
    X_t = _points(X_t)
    Kt = model.kernel(X_t, model.train_inputs)
    sW = np.sqrt(model.W)
    v = scipy.linalg.solve_triangular(model.chol_B, sW[:, None] * Kt.T, lower=True)
    return LatentPosterior(Kt @ model.grad_log_lik, model.kernel.diag(X_t) - np.sum(v * v, axis=0))


# -- multiclass classification ------------------------------------------------

@dataclass(frozen=True, eq=False)
class MulticlassClassifierModel:
    train_inputs: np.ndarray
    train_labels: np.ndarray
    kernels: tuple
    n_classes: int
    K: tuple  # per-class jittered kernel matrices
    latent: np.ndarray  # (L, n) mode, class-major rows
    pi: np.ndarray  # (n, L) fitted softmax probabilities
    E: tuple  # per-class (K_c + D_c^-1)^-1
    chol_M: np.ndarray  # lower Cholesky factor of sum_c E_c
    n_iter: int
    onehot: np.ndarray = field(repr=False)
    psi_trace: tuple = ()

    @property
    def laplace_mode(self) -> np.ndarray:
        """Mode stacked class-major as a single ``n * L`` vector."""
        return self.latent.ravel()

    def W_matrix(self) -> np.ndarray:
        """``diag(pi) - Pi Pi^T`` with Pi the vertical stack of ``diag(pi^l)``."""
        flat = self.pi.T.ravel()
        Pi = np.vstack([np.diag(self.pi[:, c]) for c in range(self.n_classes)])
        return np.diag(flat) - Pi @ Pi.T

    def K_block(self) -> np.ndarray:
        return scipy.linalg.block_diag(*self.K)

    def posterior_precision(self) -> np.ndarray:
        return np.linalg.inv(self.K_block()) + self.W_matrix()


def _multiclass_terms(K, f, Y):
    """Quantities for one Newton step at latent ``f`` of shape (L, n)."""
    L, n = f.shape
    pi = softmax(f, axis=0)
    E = []
    for c in range(L):
        sD = np.sqrt(pi[c])
        Lc = scipy.linalg.cholesky(np.eye(n) + sD[:, None] * K[c] * sD[None, :], lower=True)
        E.append(sD[:, None] * scipy.linalg.cho_solve((Lc, True), np.diag(sD)))
    M = scipy.linalg.cholesky(sum(E), lower=True)
    return pi, E, M


def fit_multiclass_laplace(inputs, labels, kernels, n_classes: int,
                           tol: float = 1e-6, max_iter: int = 200) -> MulticlassClassifierModel:
    """Softmax GP Laplace fit; ``kernels`` is one RbfKernel (shared) or one per class."""
    X = _points(inputs)
    labels = np.asarray(labels).ravel()
    n = labels.size
    if n != X.shape[0]:
        raise ValueError("inputs and labels differ in length")
    if n_classes < 2 or np.any(labels < 0) or np.any(labels >= n_classes):
        raise ValueError("labels must lie in 0..n_classes-1 with n_classes >= 2")
    if isinstance(kernels, RbfKernel):
        kernels = (kernels,) * n_classes
    kernels = tuple(kernels)
    if len(kernels) != n_classes:
        raise ValueError("need one kernel per class")
    K = tuple(k.prior_matrix(X) for k in kernels)
    Y = np.zeros((n_classes, n))
    Y[labels.astype(int), np.arange(n)] = 1.0

    def psi_of(a, f):
        return -0.5 * float(np.sum(a * f)) + float(np.sum(Y * f)) - float(np.sum(logsumexp(f, axis=0)))

    f = np.zeros((n_classes, n))
    a = np.zeros((n_classes, n))
    psi = psi_of(a, f)
    trace = [psi]
    for it in range(max_iter + 1):
        pi, E, M = _multiclass_terms(K, f, Y)
        resid = Y - pi
        grad_norm = float(np.max(np.abs(resid - a)))
        stationary = np.max(np.abs(f - np.stack([K[c] @ resid[c] for c in range(n_classes)])))
        if grad_norm <= tol and stationary <= tol:
            break
        if it == max_iter:
            raise ConvergenceError("multiclass Laplace fit did not converge", grad_norm, it)
        b = pi * f - pi * np.sum(pi * f, axis=0) + resid
        c = np.stack([E[k] @ (K[k] @ b[k]) for k in range(n_classes)])
        s = scipy.linalg.cho_solve((M, True), c.sum(axis=0))
        a_new = b - c + np.stack([E[k] @ s for k in range(n_classes)])
        step = a_new - a
        t = 1.0
        for _ in range(11):
            a_try = a + t * step
            f_try = np.stack([K[k] @ a_try[k] for k in range(n_classes)])
            psi_try = psi_of(a_try, f_try)
            if psi_try >= psi - 1e-12 * (1.0 + abs(psi)):
                break
            t *= 0.5
        a, f, psi = a_try, f_try, psi_try
        trace.append(psi)
    return MulticlassClassifierModel(X, labels.astype(int), kernels, n_classes, K, f, pi.T.copy(),
                                     tuple(E), M, it, Y, tuple(trace))


def classify_multiclass(model: MulticlassClassifierModel, X_t, full_cov: bool = False):
    """Per-class latent posterior; with ``full_cov`` also the (m, L, L) cross-class covariances."""
    X_t = _points(X_t)
    L = model.n_classes
    resid = model.onehot - model.pi.T
    kt = [model.kernels[c](model.train_inputs, X_t) for c in range(L)]  # (n, m) each
    mean = np.stack([kt[c].T @ resid[c] for c in range(L)], axis=1)
    Ek = [model.E[c] @ kt[c] for c in range(L)]
    MEk = [scipy.linalg.cho_solve((model.chol_M, True), Ek[c]) for c in range(L)]
    m = X_t.shape[0]
    cov = np.empty((m, L, L))
    for c in range(L):
        for d in range(c, L):
            val = np.sum(Ek[c] * MEk[d], axis=0)
            if c == d:
                val = val + model.kernels[c].diag(X_t) - np.sum(kt[c] * Ek[c], axis=0)
            cov[:, c, d] = cov[:, d, c] = val
    post = LatentPosterior(mean, np.diagonal(cov, axis1=1, axis2=2).copy())
    return (post, cov) if full_cov else post


# -- predictive probabilities -------------------------------------------------

def _link_prob(g, link: str):
    if link == "logistic":
        return expit(g)
    if link == "probit":
        return ndtr(g)
    raise ValueError(f"unknown link {link!r}")


def _two_columns(p_pos: np.ndarray) -> np.ndarray:
    # derive the smaller probability from the larger so each row sums to exactly one
    p_pos = np.asarray(p_pos, dtype=float)
    p_neg = 1.0 - p_pos
    low = p_pos < 0.5
    p_pos = np.where(low, 1.0 - p_neg, p_pos)
    return np.column_stack([p_neg, p_pos])


def predict_prob_mode(post: LatentPosterior, link: str = "logistic") -> np.ndarray:
    """Class probabilities at the latent mode; binary columns are (label -1, label +1)."""
    if post.is_binary:
        return _two_columns(_link_prob(post.mean, link))
    return softmax(post.mean, axis=1)


def predict_prob_averaged(post: LatentPosterior, link: str = "logistic", seed: int = 0,
                          gh_nodes: int = GH_NODES, n_draws: int = MC_DRAWS) -> np.ndarray:
    """Class probabilities averaged over the latent Gaussian."""
    if post.is_binary:
        if link == "probit":
            p = ndtr(post.mean / np.sqrt(1.0 + post.var))
        else:
            x, w = hermgauss(gh_nodes)
            g = post.mean[:, None] + np.sqrt(2.0 * post.var)[:, None] * x[None, :]
            p = _link_prob(g, link) @ w / np.sqrt(np.pi)
        return _two_columns(p)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n_draws,) + post.mean.shape)
    draws = post.mean + np.sqrt(post.var) * eps
    return softmax(draws, axis=-1).mean(axis=0)


# -- hyperparameters ----------------------------------------------------------

def select_lengthscale(inputs, labels, grid: Sequence[float], signal_variance: float = 1.0,
                       link: str = "logistic") -> float:
    """Lengthscale maximising the Laplace approximation to the binary marginal likelihood."""
    best, best_val = None, -np.inf
    for ls in grid:
        try:
            model = fit_binary_laplace(inputs, labels, RbfKernel(ls, signal_variance), link)
        except ConvergenceError:
            continue
        if model.log_marginal > best_val:
            best, best_val = float(ls), model.log_marginal
    if best is None:
        raise ConvergenceError("no lengthscale in the grid produced a converged fit", np.nan, 0)
    return best
