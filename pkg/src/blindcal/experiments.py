"""Desk-scale reproductions of the empirical studies.

Covers the exact-recovery phase transition over (p, rho), the randomized
imaging-system calibration demo with a least-squares baseline, the
line-search versus fixed-step rate comparison, the initialisation proximity
sweep, and the weighted-covariance concentration check. Every trial is
reproducible from (base_seed, cell index, trial index) alone.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fileio
from .errors import BlindcalError, DimensionError, SingularityError
from .geometry import draw_gain_perturbation
from .model import (GroundTruth, generate_ensemble, ensemble_dims,
                    iter_snapshot_matrices, sense)
from .objective import adjoint, forward
from .seeding import derive_seed
from .solver import (FIXED, LINE_SEARCH, SolveResult, SolverConfig, solve)


def to_db(ratio: float) -> float:
    """Relative-error ratio in decibels: 20 log10(r)."""
    if ratio <= 0.0:
        return -np.inf
    return 20.0 * float(np.log10(ratio))


def recovery_error(x_hat, d_hat, truth: GroundTruth) -> float:
    """max of the two relative l2 errors against the canonical (x*, d*)."""
    xs = truth.x_star
    ds = truth.d_star
    ex = float(np.linalg.norm(x_hat - xs) / np.linalg.norm(xs))
    ed = float(np.linalg.norm(d_hat - ds) / np.linalg.norm(ds))
    return max(ex, ed)


def draw_signal_ball(n: int, seed: int) -> np.ndarray:
    """Uniform draw from the n-dimensional unit l2 ball.

    Gaussian direction scaled by radius U^(1/n); this is the natural reading
    of "x in the unit ball" when no distribution is stated.
    """
    rng = np.random.default_rng(seed)
    while True:
        g = rng.standard_normal(n)
        norm = float(np.linalg.norm(g))
        if norm > 0.0:
            break
    return (rng.uniform() ** (1.0 / n) / norm) * g


def draw_smooth_signal(n: int, seed: int, modes: int = 8) -> np.ndarray:
    """Smooth image-like signal with entries in [0, 1].

    Random low-frequency cosine mixture rescaled to span [0, 1]; its l2 norm
    grows like sqrt(n), matching pixel-valued imagery rather than unit-ball
    draws.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n) / n
    x = np.zeros(n)
    for k in range(1, modes + 1):
        x += rng.standard_normal() / k * np.cos(np.pi * k * t + rng.uniform(0, 2 * np.pi))
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.full(n, 0.5)
    return (x - lo) / (hi - lo)


@dataclass
class Instance:
    truth: GroundTruth
    ensemble: object
    y: np.ndarray


def draw_instance(n: int, m: int, p: int, rho: float, seed: int,
                  distribution: str = "gaussian") -> Instance:
    """Seeded random problem instance: signal in the unit ball, gains on the
    zero-sum l-infinity sphere of radius rho (identity gains when rho = 0)."""
    x = draw_signal_ball(n, derive_seed(seed, [("signal", 0)]))
    if rho == 0.0:
        d = np.ones(m)
    else:
        d = draw_gain_perturbation(m, rho, derive_seed(seed, [("gains", 0)]))
    truth = GroundTruth(x=x, d=d, rho=rho)
    ensemble = generate_ensemble(n, m, p, distribution,
                                 derive_seed(seed, [("ensemble", 0)]))
    return Instance(truth=truth, ensemble=ensemble, y=sense(ensemble, x, d))


# ---------------------------------------------------------------------------
# Empirical phase transition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseGridSpec:
    n: int = 64
    m: int = 16
    p_values: tuple = (4, 8, 16, 32, 64, 128, 256)
    rho_values: tuple = (1e-3, 1e-2, 1e-1, 0.3, 0.6, 0.99)
    trials_per_cell: int = 10
    zeta_db: float = -70.0
    base_seed: int = 0
    tolerance: float = 1e-7
    max_iterations: int = 3000

    def __post_init__(self):
        if self.trials_per_cell < 1:
            raise BlindcalError("trials_per_cell must be at least 1")
        if self.zeta_db >= 0.0:
            raise BlindcalError("zeta_db must be negative")


@dataclass
class TrialOutcome:
    cell: int
    p: int
    rho: float
    trial: int
    success: bool
    error_db: float
    iterations: int
    stop_reason: str


@dataclass
class PhaseGridResult:
    spec: PhaseGridSpec
    success_probability: np.ndarray  # (len(p_values), len(rho_values))
    trials: list[TrialOutcome]


def _phase_trial(args) -> TrialOutcome:
    spec, cell, ip, ir, t = args
    p = spec.p_values[ip]
    rho = spec.rho_values[ir]
    seed = derive_seed(spec.base_seed, [("cell", cell), ("trial", t)])
    inst = draw_instance(spec.n, spec.m, p, rho, seed)
    config = SolverConfig(step_mode=LINE_SEARCH, rho=rho,
                          objective_tolerance=spec.tolerance,
                          max_iterations=spec.max_iterations, record_trace=False)
    try:
        result = solve(inst.ensemble, inst.y, config, truth=inst.truth)
        err = recovery_error(result.x_hat, result.d_hat, inst.truth)
        err_db = to_db(err)
        success = err < 10.0 ** (spec.zeta_db / 20.0)
        return TrialOutcome(cell, p, rho, t, success, err_db,
                            result.iterations, result.stop_reason)
    except BlindcalError as exc:  # a diverging trial is a failure, not an abort
        return TrialOutcome(cell, p, rho, t, False, np.inf, 0, f"error: {exc}")


def run_phase_transition(spec: PhaseGridSpec, workers: int = 1) -> PhaseGridResult:
    """Success probability of exact recovery over the (p, rho) grid.

    Success means the max relative error of (x_hat, d_hat) against the
    canonical truth falls below 10^(zeta_db / 20) after a line-search solve.
    """
    tasks = []
    for ip in range(len(spec.p_values)):
        for ir in range(len(spec.rho_values)):
            cell = ip * len(spec.rho_values) + ir
            for t in range(spec.trials_per_cell):
                tasks.append((spec, cell, ip, ir, t))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_phase_trial, tasks, chunksize=1))
    else:
        outcomes = [_phase_trial(task) for task in tasks]

    prob = np.zeros((len(spec.p_values), len(spec.rho_values)))
    for out in outcomes:
        ip, ir = divmod(out.cell, len(spec.rho_values))
        prob[ip, ir] += 1.0 if out.success else 0.0
    prob /= spec.trials_per_cell
    return PhaseGridResult(spec=spec, success_probability=prob, trials=outcomes)


# ---------------------------------------------------------------------------
# Least-squares baseline (gains pinned to one)
# ---------------------------------------------------------------------------

def least_squares_baseline(ensemble, y, rtol: float = 1e-10,
                           max_iterations: int | None = None) -> np.ndarray:
    """Minimise f(xi, 1) by conjugate gradients on the normal equations.

    Solves G xi = b with G = (1/mp) sum_l A_l^T A_l and b = (1/mp) sum_l
    A_l^T y_l, matrix free, down to relative residual rtol. Underdetermined
    systems (mp < n) and residual stagnation raise SingularityError.
    """
    n, m, p = ensemble_dims(ensemble)
    y = np.asarray(y, dtype=float)
    if y.shape != (p, m):
        raise DimensionError(f"snapshots must have shape ({p}, {m}), got {y.shape}")
    if m * p < n:
        raise SingularityError(f"normal equations underdetermined: mp = {m * p} < n = {n}")

    scale = 1.0 / (m * p)

    def apply(v):
        return scale * adjoint(ensemble, forward(ensemble, v))

    b = scale * adjoint(ensemble, y)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(n)
    if max_iterations is None:
        max_iterations = 10 * n

    x = np.zeros(n)
    r = b.copy()
    d = r.copy()
    rr = float(r @ r)
    best = np.sqrt(rr) / b_norm
    stalled = 0
    for _ in range(max_iterations):
        if np.sqrt(rr) / b_norm <= rtol:
            return x
        gd = apply(d)
        dgd = float(d @ gd)
        if dgd <= 0.0:
            raise SingularityError("normal matrix not positive definite along search direction")
        alpha = rr / dgd
        x = x + alpha * d
        r = r - alpha * gd
        rr_new = float(r @ r)
        rel = np.sqrt(rr_new) / b_norm
        if rel < best * 0.999999:
            best = rel
            stalled = 0
        else:
            stalled += 1
            if stalled >= 50:
                raise SingularityError(
                    f"conjugate gradients stagnated at relative residual {rel:.3e}")
        d = r + (rr_new / rr) * d
        rr = rr_new
    if np.sqrt(rr) / b_norm <= rtol:
        return x
    raise SingularityError(
        f"conjugate gradients did not reach rtol={rtol:g} in {max_iterations} iterations")


# ---------------------------------------------------------------------------
# Randomized imaging-system calibration demo
# ---------------------------------------------------------------------------

@dataclass
class ChannelReport:
    signal_error_db: float
    gain_error_db: float
    ls_error_db: float
    iterations: int
    stop_reason: str


@dataclass
class DemoReport:
    error_db: float
    ls_error_db: float
    iterations: int
    stop_reason: str
    channels: list[ChannelReport]
    x_hat: np.ndarray  # (c, h, w)
    d_hat: np.ndarray  # gain estimate of the first channel, length m
    truth_d: np.ndarray

    def summary(self) -> dict:
        return {
            "error_db": self.error_db,
            "ls_error_db": self.ls_error_db,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "channels": [
                {
                    "signal_error_db": c.signal_error_db,
                    "gain_error_db": c.gain_error_db,
                    "ls_error_db": c.ls_error_db,
                    "iterations": c.iterations,
                    "stop_reason": c.stop_reason,
                }
                for c in self.channels
            ],
        }


def run_imaging_demo(image_path, m: int, p: int, rho: float, seed: int = 0,
                     tol: float = 1e-6, max_iterations: int = 100_000,
                     out_dir=None) -> DemoReport:
    """Blind calibration of an m-sensor array imaging a fixed picture.

    Each colour channel is flattened to a signal of length n = h * w and
    sensed through one shared ensemble and one shared gain profile of
    maximum deviation rho. Channels are solved independently; the baseline
    fixes the gains to one and solves the resulting least-squares problem,
    fully absorbing the model error. With out_dir set, the reconstruction,
    the recovered gain map, and a JSON error report are written there.
    """
    image = fileio.read_image(image_path)
    c, h, w = image.shape
    n = h * w
    ensemble = generate_ensemble(n, m, p, "gaussian", derive_seed(seed, [("ensemble", 0)]))
    if rho == 0.0:
        d = np.ones(m)
    else:
        d = draw_gain_perturbation(m, rho, derive_seed(seed, [("gains", 0)]))

    config = SolverConfig(step_mode=LINE_SEARCH, rho=rho, objective_tolerance=tol,
                          max_iterations=max_iterations, record_trace=False)
    channels = []
    x_hat = np.empty_like(image)
    d_first = None
    for ci in range(c):
        x = image[ci].ravel()
        truth = GroundTruth(x=x, d=d, rho=rho)
        y = sense(ensemble, x, d)
        result = solve(ensemble, y, config, truth=truth)
        xs, ds = truth.x_star, truth.d_star
        sig_err = float(np.linalg.norm(result.x_hat - xs) / np.linalg.norm(xs))
        gain_err = float(np.linalg.norm(result.d_hat - ds) / np.linalg.norm(ds))
        x_ls = least_squares_baseline(ensemble, y)
        ls_err = float(np.linalg.norm(x_ls - xs) / np.linalg.norm(xs))
        channels.append(ChannelReport(
            signal_error_db=to_db(sig_err), gain_error_db=to_db(gain_err),
            ls_error_db=to_db(ls_err), iterations=result.iterations,
            stop_reason=result.stop_reason))
        x_hat[ci] = result.x_hat.reshape(h, w)
        if d_first is None:
            d_first = result.d_hat

    error_db = max(max(ch.signal_error_db, ch.gain_error_db) for ch in channels)
    ls_error_db = max(ch.ls_error_db for ch in channels)
    stop = "converged"
    for ch in channels:
        if ch.stop_reason != "converged":
            stop = ch.stop_reason
    report = DemoReport(error_db=error_db, ls_error_db=ls_error_db,
                        iterations=max(ch.iterations for ch in channels),
                        stop_reason=stop, channels=channels, x_hat=x_hat,
                        d_hat=d_first, truth_d=d)
    if out_dir is not None:
        _write_demo_outputs(report, out_dir)
    return report


def _write_demo_outputs(report: DemoReport, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    c = report.x_hat.shape[0]
    suffix = "pgm" if c == 1 else "ppm"
    fileio.write_image(os.path.join(out_dir, f"x_hat.{suffix}"),
                       np.clip(report.x_hat, 0.0, 1.0))
    # gain map rendered min-to-max over 8 bits, square layout when possible
    d = report.d_hat
    side = int(round(np.sqrt(d.size)))
    shape = (side, side) if side * side == d.size else (1, d.size)
    span = float(d.max() - d.min())
    scaled = (d - d.min()) / span if span > 0 else np.full(d.size, 0.5)
    fileio.write_image(os.path.join(out_dir, "d_hat.pgm"),
                       scaled.reshape(1, *shape))
    fileio.write_report_json(os.path.join(out_dir, "report.json"), report.summary())


# ---------------------------------------------------------------------------
# Weighted covariance concentration
# ---------------------------------------------------------------------------

def check_concentration(n: int, m: int, p: int, distribution: str, theta,
                        trials: int, seed: int = 0) -> dict:
    """Spectral deviation of the theta-weighted covariance from its mean.

    For each trial the statistic is
    || (1/mp) sum_{i,l} theta_i (a_il a_il^T - I) ||_2 / ||theta||_inf
    (zero when theta = 0). Returns the max and mean over trials.
    """
    if n > 512:
        raise DimensionError("dense eigen-computation gated to n <= 512")
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (m,):
        raise DimensionError(f"theta must have shape ({m},), got {theta.shape}")
    theta_inf = float(np.max(np.abs(theta)))
    deviations = []
    for t in range(trials):
        if theta_inf == 0.0:
            deviations.append(0.0)
            continue
        ensemble = generate_ensemble(n, m, p, distribution,
                                     derive_seed(seed, [("trial", t)]))
        acc = np.zeros((n, n))
        for a in iter_snapshot_matrices(ensemble):
            acc += a.T @ (theta[:, None] * a)
        acc -= p * float(np.sum(theta)) * np.eye(n)
        acc /= m * p
        spectral = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (acc + acc.T)))))
        deviations.append(spectral / theta_inf)
    return {
        "max_deviation": float(np.max(deviations)),
        "mean_deviation": float(np.mean(deviations)),
        "deviations": [float(v) for v in deviations],
    }


# ---------------------------------------------------------------------------
# Line search versus fixed step
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateComparisonSpec:
    """Scaled replica of the imaging-system comparison: image-like signal,
    strongly perturbed gains.

    The snapshot count is chosen well above the identifiability limit
    (mp = 16 n) so the fixed-step run is not throttled by the worst
    eigenvalue of the sensing Gram matrix and finishes in seconds.
    """

    n: int = 64
    m: int = 16
    p: int = 64
    rho: float = 0.5
    seed: int = 0
    tolerance: float = 1e-7
    mu: float = 1e-4
    max_iterations: int = 400_000


@dataclass
class RateComparisonResult:
    line_search: SolveResult
    fixed: SolveResult
    line_search_error_db: float
    fixed_error_db: float


def draw_imaging_instance(n: int, m: int, p: int, rho: float, seed: int) -> Instance:
    """Like draw_instance but with a smooth pixel-valued signal in [0, 1]."""
    x = draw_smooth_signal(n, derive_seed(seed, [("signal", 0)]))
    if rho == 0.0:
        d = np.ones(m)
    else:
        d = draw_gain_perturbation(m, rho, derive_seed(seed, [("gains", 0)]))
    truth = GroundTruth(x=x, d=d, rho=rho)
    ensemble = generate_ensemble(n, m, p, "gaussian",
                                 derive_seed(seed, [("ensemble", 0)]))
    return Instance(truth=truth, ensemble=ensemble, y=sense(ensemble, x, d))


def run_rate_comparison(spec: RateComparisonSpec) -> RateComparisonResult:
    """Solve one seeded instance twice: exact line searches vs fixed steps.

    Both runs share the instance and the stop tolerance; the fixed run uses
    mu_xi = mu and mu_gamma = mu * m / ||xi_0||^2.
    """
    inst = draw_imaging_instance(spec.n, spec.m, spec.p, spec.rho, spec.seed)
    base = dict(rho=spec.rho, objective_tolerance=spec.tolerance,
                max_iterations=spec.max_iterations, record_trace=True)
    ls = solve(inst.ensemble, inst.y,
               SolverConfig(step_mode=LINE_SEARCH, **base), truth=inst.truth)
    fx = solve(inst.ensemble, inst.y,
               SolverConfig(step_mode=FIXED, mu=spec.mu, **base), truth=inst.truth)
    return RateComparisonResult(
        line_search=ls, fixed=fx,
        line_search_error_db=to_db(recovery_error(ls.x_hat, ls.d_hat, inst.truth)),
        fixed_error_db=to_db(recovery_error(fx.x_hat, fx.d_hat, inst.truth)))


# ---------------------------------------------------------------------------
# Initialisation proximity sweep
# ---------------------------------------------------------------------------

@dataclass
class InitStudyResult:
    mp_values: list[int]
    mean_relative_error: list[float]
    slope: float


def run_init_study(n: int = 32, m: int = 16,
                   p_values=(16, 32, 64, 128, 256, 512, 1024),
                   trials: int = 50, rho: float = 0.5,
                   base_seed: int = 0) -> InitStudyResult:
    """Mean relative error of the backprojection start versus mp.

    Fits the regression slope of log error against log(mp); the concentration
    analysis predicts a slope near -1/2.
    """
    from .solver import initialise

    mp_values = []
    means = []
    for ip, p in enumerate(p_values):
        errors = []
        for t in range(trials):
            seed = derive_seed(base_seed, [("point", ip), ("trial", t)])
            inst = draw_instance(n, m, p, rho, seed)
            xi0, _ = initialise(inst.ensemble, inst.y)
            xs = inst.truth.x_star
            errors.append(float(np.linalg.norm(xi0 - xs) / np.linalg.norm(xs)))
        mp_values.append(m * p)
        means.append(float(np.mean(errors)))
    slope = float(np.polyfit(np.log(mp_values), np.log(means), 1)[0])
    return InitStudyResult(mp_values=mp_values, mean_relative_error=means, slope=slope)
