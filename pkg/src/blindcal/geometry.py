"""Constraint sets and metric structure for the gain-calibrated problem.

The feasible gain set is the slice of the scaled simplex within l-infinity
distance rho of the all-ones vector:

    C_rho = { g : sum(g) = m, max|g_i - 1| <= rho },  0 <= rho < 1,

and iterates are measured against the ground truth with the weighted squared
distance ``delta`` or the rank-one Frobenius pre-metric ``delta_F``. The two
are equivalent on C_rho up to factors (1 - rho) and (1 + 2 rho).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .model import GroundTruth, as_point


def project_zero_sum(v) -> np.ndarray:
    """Orthogonal projection onto zero-sum vectors: v - mean(v).

    This is the action of P = I - (1/m) 11^T; it is idempotent and
    self-adjoint, with the constant vectors as its kernel.
    """
    v = np.asarray(v, dtype=float)
    return v - v.mean()


def project_C_rho(gamma, rho: float) -> np.ndarray:
    """Euclidean projection onto C_rho.

    Writing z = gamma - 1, the projection solves

        min ||e - z||^2  s.t.  sum(e) = 0,  |e_i| <= rho,

    whose KKT conditions give e_i = clip(z_i - lam, -rho, rho) with the
    multiplier lam chosen so the coordinates sum to zero. The map
    lam -> sum_i e_i(lam) is piecewise linear and non-increasing, so lam is
    located exactly by scanning the 2m sorted breakpoints {z_i -+ rho}; a
    bisection fallback tightens the root if the scan leaves a residual above
    1e-12 * m.

    Returns 1 + e, which satisfies both constraints to near machine accuracy.
    """
    if not 0.0 <= rho < 1.0:
        raise ParameterError(f"rho must lie in [0, 1), got {rho}")
    gamma = np.asarray(gamma, dtype=float)
    m = gamma.size
    if rho == 0.0:
        return np.ones(m)
    z = gamma - 1.0

    zs = np.sort(z)
    prefix = np.concatenate(([0.0], np.cumsum(zs)))

    def sum_e(lam):
        lam = np.atleast_1d(lam)
        lo = np.searchsorted(zs, lam - rho, side="left")
        hi = np.searchsorted(zs, lam + rho, side="right")
        cnt_mid = hi - lo
        sum_mid = prefix[hi] - prefix[lo]
        # entries above lam + rho clip to +rho, below lam - rho clip to -rho
        return rho * (m - hi) - rho * lo + sum_mid - lam * cnt_mid

    def sum_e_scalar(lam):
        return float(sum_e(np.array([lam]))[0])

    breakpoints = np.sort(np.concatenate((z - rho, z + rho)))
    values = sum_e(breakpoints)
    j = int(np.searchsorted(-values, 0.0, side="left"))  # first index with value <= 0
    if j >= breakpoints.size:
        lam = breakpoints[-1]
    elif values[j] == 0.0 or j == 0:
        lam = breakpoints[j]
    else:
        # interpolate inside the bracketing segment; sum_e is linear there
        left, right = breakpoints[j - 1], breakpoints[j]
        v_left = float(values[j - 1])
        v_right = float(values[j])
        if v_left == v_right:
            lam = left
        else:
            # the fraction lies in [0, 1] by the bracketing, so this cannot
            # overflow even for extreme inputs
            lam = left + (right - left) * (v_left / (v_left - v_right))

    e = np.clip(z - lam, -rho, rho)
    residual = float(np.sum(e))
    if abs(residual) > 1e-12 * m:
        lo_b, hi_b = float(breakpoints[0]) - 1.0, float(breakpoints[-1]) + 1.0
        for _ in range(200):
            mid = 0.5 * (lo_b + hi_b)
            if sum_e_scalar(mid) > 0.0:
                lo_b = mid
            else:
                hi_b = mid
            if hi_b - lo_b < 1e-16 * max(1.0, abs(lam)):
                break
        lam = 0.5 * (lo_b + hi_b)
        e = np.clip(z - lam, -rho, rho)
    return 1.0 + e


def delta(point, truth: GroundTruth) -> float:
    """Weighted squared distance to the canonical minimiser:

    ||xi - x*||^2 + (||x*||^2 / m) ||gamma - d*||^2.
    """
    xi, gamma = as_point(point)
    xs = truth.x_star
    ds = truth.d_star
    w = float(xs @ xs) / truth.m
    return float(np.sum((xi - xs) ** 2) + w * np.sum((gamma - ds) ** 2))


def delta_F(point, truth: GroundTruth) -> float:
    """Frobenius pre-metric (1/m) || xi gamma^T - x* d*^T ||_F^2.

    Evaluated through the expanded form to avoid materialising the n-by-m
    outer products; tiny negative values from cancellation clamp to zero.
    """
    xi, gamma = as_point(point)
    xs = truth.x_star
    ds = truth.d_star
    value = (float(xi @ xi) * float(gamma @ gamma)
             + float(xs @ xs) * float(ds @ ds)
             - 2.0 * float(gamma @ ds) * float(xi @ xs)) / truth.m
    return max(value, 0.0)


def draw_gain_perturbation(m: int, rho: float, seed: int) -> np.ndarray:
    """Draw gains d = 1 + w with sum(w) = 0 and ||w||_inf = rho exactly.

    The sampler projects a uniform cube draw onto the zero-sum hyperplane and
    rescales it to touch the l-infinity sphere of radius rho; draws that
    collapse below 1e-12 in l-infinity norm are rejected and retried. The
    distribution over the constraint set is a free choice of this sampler.
    """
    if m < 2:
        raise ParameterError("m must be at least 2 (zero-sum sphere is empty for m=1)")
    if not 0.0 < rho < 1.0:
        raise ParameterError(f"rho must lie in (0, 1), got {rho}")
    rng = np.random.default_rng(seed)
    while True:
        u = rng.uniform(-1.0, 1.0, size=m)
        w = u - u.mean()
        linf = float(np.max(np.abs(w)))
        if linf >= 1e-12:
            return 1.0 + (rho / linf) * w


@dataclass(frozen=True)
class NeighbourhoodSpec:
    """Parameters of the basin D_{kappa,rho}: an ellipsoid around the truth
    intersected with R^n x C_rho."""

    kappa: float
    rho: float
    x_star_norm: float

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ParameterError(f"rho must lie in [0, 1), got {self.rho}")
        if self.kappa < 0.0 or self.x_star_norm < 0.0:
            raise ParameterError("kappa and x_star_norm must be nonnegative")


# Additive slack for boundary membership tests: floating-point iterates that
# sit exactly on the boundary must not flip the answer.
_MEMBERSHIP_SLACK = 1e-9


def in_neighbourhood(point, spec: NeighbourhoodSpec, truth: GroundTruth) -> bool:
    """Closed-set membership test for D_{kappa,rho} with 1e-9 slack."""
    xi, gamma = as_point(point)
    m = gamma.size
    if abs(float(np.sum(gamma)) - m) > _MEMBERSHIP_SLACK * m:
        return False
    if float(np.max(np.abs(gamma - 1.0))) > spec.rho + _MEMBERSHIP_SLACK:
        return False
    return delta(point, truth) <= spec.kappa ** 2 * spec.x_star_norm ** 2 + _MEMBERSHIP_SLACK
