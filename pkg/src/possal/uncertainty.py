"""Epistemic-uncertainty measures and necessities of correct classification.

All latent quantities are Gaussian possibilities ``N(theta; mu, var)``
rescaled to a maximum of one. Binary links map a latent value to the
probability of the positive label; the multiclass likelihood is the softmax.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.special import log_ndtr, log_softmax, softmax

from .possibility import GridPossibility

_SQRT_EPS = math.sqrt(np.finfo(float).eps)
_GOLD = 0.5 * (3.0 - math.sqrt(5.0))
LINKS = ("logistic", "probit")
BRACKET_HALF_WIDTH = 12.0


class BracketError(RuntimeError):
    pass


def maximize_scalar(f: Callable[[float], float], lo: float, hi: float,
                    tol: float = 1e-10, maxiter: int = 200) -> tuple[float, float]:
    """Bracketed derivative-free maximisation (Brent's golden-section/parabolic hybrid).

    Returns ``(argmax, max)`` for the best point visited.
    """
    lo, hi = float(lo), float(hi)
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ValueError(f"invalid bracket [{lo}, {hi}]")

    def neg(x):
        v = float(f(x))
        if not math.isfinite(v):
            raise ValueError(f"objective is not finite at {x!r}: {v!r}")
        return -v

    a, b = lo, hi
    x = w = v = a + _GOLD * (b - a)
    fx = fw = fv = neg(x)
    d = e = 0.0
    for _ in range(maxiter):
        mid = 0.5 * (a + b)
        tol1 = _SQRT_EPS * abs(x) + tol / 3.0
        tol2 = 2.0 * tol1
        if abs(x - mid) <= tol2 - 0.5 * (b - a):
            break
        golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            if abs(p) < abs(0.5 * q * e) and q * (a - x) < p < q * (b - x):
                e, d = d, p / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = tol1 if x < mid else -tol1
                golden = False
        if golden:
            e = (b - x) if x < mid else (a - x)
            d = _GOLD * e
        u = x + (d if abs(d) >= tol1 else (tol1 if d > 0 else -tol1))
        fu = neg(u)
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            v, fv, w, fw, x, fx = w, fw, x, fx, u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv, w, fw = w, fw, u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, -fx


def _log_link(theta, link: str):
    """log p(label = +1 | theta)."""
    if link == "logistic":
        return -np.logaddexp(0.0, -theta)
    if link == "probit":
        return log_ndtr(theta)
    raise ValueError(f"unknown link {link!r}; expected one of {LINKS}")


def _check_var(var) -> None:
    if np.any(np.asarray(var) <= 0) or not np.all(np.isfinite(var)):
        raise ValueError("variances must be finite and strictly positive")


def u_theta_gaussian(mu: float, var: float) -> float:
    """Integral of a 1D Gaussian possibility: ``sigma * sqrt(2 pi)``."""
    _check_var(var)
    return math.sqrt(2.0 * math.pi * var)


def u_theta_grid(f: GridPossibility) -> float:
    """Riemann-sum integral of a tabulated possibility over its grid."""
    return float(f.values.sum() * f.cell_volume)


def u_y_discrete(prior: GridPossibility, likelihood) -> float:
    """Sum over labels of ``max_theta f(theta) p(y | theta)`` minus one.

    ``likelihood`` has shape ``(n_labels, *grid_shape)``.
    """
    lik = np.asarray(likelihood, dtype=float)
    if lik.shape[1:] != prior.values.shape:
        raise ValueError("likelihood must have shape (n_labels, *grid_shape)")
    if np.any(lik < 0):
        raise ValueError("likelihood values must be non-negative")
    if np.max(np.abs(lik.sum(axis=0) - 1.0)) > 1e-9:
        raise ValueError("label probabilities must sum to one at every grid point")
    sups = (lik * prior.values).reshape(lik.shape[0], -1).max(axis=1)
    return max(float(sups.sum()) - 1.0, 0.0)


def _sup_log_binary(mu: float, sd: float, sign: float, link: str) -> float:
    """log of ``sup_theta N(theta; mu, sd^2) p(sign | theta)``, searched in standard units."""
    def objective(z):
        return -0.5 * z * z + float(_log_link(sign * (mu + sd * z), link))

    half = BRACKET_HALF_WIDTH
    for _ in range(5):
        z, val = maximize_scalar(objective, -half, half)
        if half - abs(z) > 1e-6:
            return val
        half *= 2.0
    raise BracketError(f"supremum not bracketed for mu={mu}, sd={sd}")


def u_l_bin(mu: float, var: float, link: str = "probit") -> float:
    """Binary label-space epistemic uncertainty, in [0, 1]."""
    _check_var(var)
    sd = math.sqrt(var)
    pos = _sup_log_binary(float(mu), sd, 1.0, link)
    neg = _sup_log_binary(float(mu), sd, -1.0, link)
    return min(max(math.exp(pos) + math.exp(neg) - 1.0, 0.0), 1.0)


def _coordinate_sup(label: int, mu: np.ndarray, sd: np.ndarray, start: np.ndarray,
                    sweeps: int, rtol: float) -> float:
    z = start.astype(float).copy()

    def total(zv):
        theta = mu + sd * zv
        return float(log_softmax(theta)[label] - 0.5 * zv @ zv)

    best = total(z)
    for _ in range(sweeps):
        prev = best
        for k in range(len(z)):
            # the optimum satisfies |z_k| <= sd_k since log-softmax has slopes in (-1, 1)
            half = max(BRACKET_HALF_WIDTH, sd[k] + 1.0)

            def along(t, k=k):
                z[k] = t
                return total(z)

            zk, best = maximize_scalar(along, -half, half)
            z[k] = zk
        if abs(best - prev) <= rtol * max(1.0, abs(prev)):
            break
    return best


def _newton_sup(mu: np.ndarray, var: np.ndarray, tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """log sup over theta of ``softmax_l(theta) prod_k N(theta_k; mu_k, var_k)`` for every label l.

    ``mu`` and ``var`` have shape ``(m, L)``; returns ``(m, L)``. The objective is
    strictly concave in theta, so damped Newton from theta = mu finds the unique maximiser.
    """
    m, L = mu.shape
    eye = np.eye(L)
    theta = np.repeat(mu[:, None, :], L, axis=1)  # (m, label, L)
    target = np.broadcast_to(eye, (m, L, L))
    prec = 1.0 / var[:, None, :]

    def objective(th):
        return (np.take_along_axis(log_softmax(th, axis=-1), np.arange(L)[None, :, None], -1)[..., 0]
                - 0.5 * np.sum((th - mu[:, None, :]) ** 2 * prec, axis=-1))

    val = objective(theta)
    for _ in range(max_iter):
        pi = softmax(theta, axis=-1)
        grad = target - pi - (theta - mu[:, None, :]) * prec
        if np.max(np.abs(grad) * np.sqrt(var[:, None, :])) <= tol:
            break
        hess = pi[..., :, None] * pi[..., None, :] - pi[..., :, None] * eye
        hess = hess - prec[..., None] * eye
        step = np.linalg.solve(-hess, grad[..., None])[..., 0]
        t = np.ones((m, L))
        for _ in range(30):
            cand = theta + t[..., None] * step
            new = objective(cand)
            ok = new >= val - 1e-14 * np.abs(val)
            if ok.all():
                break
            t = np.where(ok, t, 0.5 * t)
        theta = np.where(ok[..., None], cand, theta)
        val = np.where(ok, new, val)
    return val


def u_l_multi(mu, var, method: str = "newton") -> float:
    """Multiclass label-space epistemic uncertainty, in [0, |L| - 1].

    ``method="coordinate"`` runs multi-start coordinate ascent with
    :func:`maximize_scalar`; ``"newton"`` is the vectorised default.
    """
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if mu.ndim != 1 or mu.shape != var.shape or mu.size < 2:
        raise ValueError("mu and var must be vectors over at least two labels")
    _check_var(var)
    L = mu.size
    if method == "newton":
        sups = np.exp(_newton_sup(mu[None, :], var[None, :])[0])
    elif method == "coordinate":
        sd = np.sqrt(var)
        starts = [np.zeros(L)] + [np.eye(L)[k] for k in range(L)]
        sups = np.array([
            math.exp(max(_coordinate_sup(l, mu, sd, s, sweeps=50, rtol=1e-10) for s in starts))
            for l in range(L)
        ])
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(np.clip(sups.sum() - 1.0, 0.0, L - 1.0))


def u_l_multi_batch(mu, var) -> np.ndarray:
    """Vectorised :func:`u_l_multi` over rows of ``(m, L)`` arrays."""
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    _check_var(var)
    sups = np.exp(_newton_sup(mu, var)).sum(axis=1)
    return np.clip(sups - 1.0, 0.0, mu.shape[1] - 1.0)


def nec_bin(mu, var):
    """Necessity of correct binary classification, ``1 - exp(-mu^2 / (2 var))``."""
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(var < 0):
        raise ValueError("variances must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(var > 0, mu * mu / np.where(var > 0, var, 1.0), np.where(mu == 0, 0.0, np.inf))
    out = -np.expm1(-0.5 * ratio)
    return float(out) if out.ndim == 0 else out


def nec_multi(mu, var, return_degenerate: bool = False):
    """Necessity that the label with the largest latent mean is the correct one.

    Accepts a single ``(L,)`` pair or ``(m, L)`` batches. Rows whose maximum
    mean is tied are degenerate and get necessity 0.
    """
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if mu.shape != var.shape or mu.shape[-1] < 2:
        raise ValueError("mu and var must share shape (..., L) with L >= 2")
    if np.any(var < 0):
        raise ValueError("variances must be non-negative")
    single = mu.ndim == 1
    mu2, var2 = np.atleast_2d(mu), np.atleast_2d(var)
    rows = np.arange(mu2.shape[0])
    best = np.argmax(mu2, axis=1)
    gap = mu2[rows, best][:, None] - mu2
    spread = var2[rows, best][:, None] + var2
    others = np.ones_like(mu2, dtype=bool)
    others[rows, best] = False
    degenerate = np.any(others & (gap <= 0), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(spread > 0, gap * gap / np.where(spread > 0, spread, 1.0), np.inf)
    cred = np.where(others, np.exp(-0.5 * ratio), 0.0).max(axis=1)
    out = np.where(degenerate, 0.0, 1.0 - cred)
    if single:
        out, degenerate = float(out[0]), bool(degenerate[0])
    return (out, degenerate) if return_degenerate else out
