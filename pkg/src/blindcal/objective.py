"""Data-fidelity objective, its gradients and Hessian, and their expectations.

All finite-sample quantities average over the mp scalar measurements:

    f(xi, gamma) = (1 / 2mp) sum_l || gamma * (A_l xi) - y_l ||^2

with gradients

    grad_xi    = (1 / mp) sum_l A_l^T (gamma * r_l)
    grad_gamma = (1 / mp) sum_l (A_l xi) * r_l,   r_l = gamma * (A_l xi) - y_l

and the projected gain gradient P (grad_gamma) with P the zero-sum projector.
As p grows each quantity is an unbiased estimate of a closed form in
(xi, gamma, x*, d*); the expectation forms are provided for Monte-Carlo
verification and for the objective's Frobenius interpretation
E f = (1 / 2m) || xi gamma^T - x* d*^T ||_F^2.

Per-snapshot sums use numpy reductions (pairwise summation) and merge across
snapshots in ascending index order, so results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import DimensionError
from .model import (GroundTruth, as_point, ensemble_dims, iter_snapshot_matrices,
                    stacked_matrices)

# Dense Hessian assembly is for diagnostics only; refuse absurd sizes.
HESSIAN_SIZE_LIMIT = 2048


def _check_shapes(ensemble, y=None, point=None):
    n, m, p = ensemble_dims(ensemble)
    if y is not None:
        y = np.asarray(y, dtype=float)
        if y.shape != (p, m):
            raise DimensionError(f"snapshots must have shape ({p}, {m}), got {y.shape}")
    if point is not None:
        xi, gamma = as_point(point)
        if xi.shape != (n,):
            raise DimensionError(f"xi must have shape ({n},), got {xi.shape}")
        if gamma.shape != (m,):
            raise DimensionError(f"gamma must have shape ({m},), got {gamma.shape}")
    return n, m, p


def forward(ensemble, v) -> np.ndarray:
    """Stack of A_l @ v over snapshots, shape (p, m)."""
    n, m, p = ensemble_dims(ensemble)
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DimensionError(f"vector must have shape ({n},), got {v.shape}")
    stacked = stacked_matrices(ensemble)
    if stacked is not None:
        return stacked @ v
    out = np.empty((p, m))
    for l, a in enumerate(iter_snapshot_matrices(ensemble)):
        out[l] = a @ v
    return out


def adjoint(ensemble, w) -> np.ndarray:
    """sum_l A_l^T w_l for per-snapshot weights w of shape (p, m)."""
    n, m, p = ensemble_dims(ensemble)
    w = np.asarray(w, dtype=float)
    if w.shape != (p, m):
        raise DimensionError(f"weights must have shape ({p}, {m}), got {w.shape}")
    stacked = stacked_matrices(ensemble)
    if stacked is not None:
        per_snapshot = np.einsum("lmn,lm->ln", stacked, w)
    else:
        per_snapshot = np.empty((p, n))
        for l, a in enumerate(iter_snapshot_matrices(ensemble)):
            per_snapshot[l] = a.T @ w[l]
    return np.sum(per_snapshot, axis=0)


def residuals(ensemble, y, point) -> np.ndarray:
    """Per-snapshot residuals gamma * (A_l xi) - y_l, shape (p, m)."""
    _check_shapes(ensemble, y, point)
    xi, gamma = as_point(point)
    return gamma[None, :] * forward(ensemble, xi) - np.asarray(y, dtype=float)


def objective_value(ensemble, y, point) -> float:
    n, m, p = _check_shapes(ensemble, y, point)
    r = residuals(ensemble, y, point)
    return float(np.sum(r * r)) / (2.0 * m * p)


@dataclass(frozen=True)
class GradientPair:
    """Signal gradient, gain gradient, and the zero-sum-projected gain gradient."""

    grad_xi: np.ndarray
    grad_gamma: np.ndarray
    grad_gamma_projected: np.ndarray


def gradients(ensemble, y, point) -> GradientPair:
    """Both gradient blocks, sharing one residual evaluation."""
    n, m, p = _check_shapes(ensemble, y, point)
    xi, gamma = as_point(point)
    ax = forward(ensemble, xi)
    r = gamma[None, :] * ax - np.asarray(y, dtype=float)
    scale = 1.0 / (m * p)
    grad_xi = scale * adjoint(ensemble, gamma[None, :] * r)
    grad_gamma = scale * np.sum(ax * r, axis=0)
    return GradientPair(grad_xi=grad_xi, grad_gamma=grad_gamma,
                        grad_gamma_projected=geometry.project_zero_sum(grad_gamma))


def hessian(ensemble, y, point) -> np.ndarray:
    """Dense (n+m)-by-(n+m) Hessian of f at the given point (diagnostic use).

    Block form per snapshot, averaged over (i, l):

        [ A^T diag(gamma)^2 A        A^T diag(2 gamma * (A xi) - y) ]
        [ diag(...) A                diag((A xi)^2)                 ]
    """
    n, m, p = _check_shapes(ensemble, y, point)
    if n + m > HESSIAN_SIZE_LIMIT:
        raise DimensionError(
            f"dense Hessian limited to n + m <= {HESSIAN_SIZE_LIMIT}, got {n + m}")
    xi, gamma = as_point(point)
    y = np.asarray(y, dtype=float)
    h_xx = np.zeros((n, n))
    h_xg = np.zeros((n, m))
    h_gg_diag = np.zeros(m)
    gamma_sq = gamma ** 2
    for l, a in enumerate(iter_snapshot_matrices(ensemble)):
        ax = a @ xi
        h_xx += a.T @ (gamma_sq[:, None] * a)
        h_xg += a.T * (2.0 * gamma * ax - y[l])[None, :]
        h_gg_diag += ax ** 2
    scale = 1.0 / (m * p)
    out = np.empty((n + m, n + m))
    out[:n, :n] = scale * h_xx
    out[:n, n:] = scale * h_xg
    out[n:, :n] = scale * h_xg.T
    out[n:, n:] = np.diag(scale * h_gg_diag)
    return out


# ---------------------------------------------------------------------------
# Expectation forms (p -> infinity limits over the sensing rows)
# ---------------------------------------------------------------------------

def expected_objective(point, truth: GroundTruth) -> float:
    """E f(xi, gamma) = (1 / 2m) || xi gamma^T - x* d*^T ||_F^2."""
    return 0.5 * geometry.delta_F(point, truth)


def expected_gradients(point, truth: GroundTruth) -> GradientPair:
    xi, gamma = as_point(point)
    xs = truth.x_star
    ds = truth.d_star
    m = truth.m
    grad_xi = (float(gamma @ gamma) * xi - float(gamma @ ds) * xs) / m
    grad_gamma = (float(xi @ xi) * gamma - float(xi @ xs) * ds) / m
    return GradientPair(grad_xi=grad_xi, grad_gamma=grad_gamma,
                        grad_gamma_projected=geometry.project_zero_sum(grad_gamma))


def expected_hessian(point, truth: GroundTruth) -> np.ndarray:
    xi, gamma = as_point(point)
    xs = truth.x_star
    ds = truth.d_star
    n, m = xi.size, gamma.size
    out = np.empty((n + m, n + m))
    out[:n, :n] = (float(gamma @ gamma) / m) * np.eye(n)
    cross = (2.0 * np.outer(xi, gamma) - np.outer(xs, ds)) / m
    out[:n, n:] = cross
    out[n:, :n] = cross.T
    out[n:, n:] = (float(xi @ xi) / m) * np.eye(m)
    return out
