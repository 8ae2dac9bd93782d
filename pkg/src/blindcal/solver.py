"""Projected gradient descent for joint signal/gain recovery.

The solver initialises the signal with the backprojection average
``xi_0 = (1/mp) sum_l A_l^T y_l`` (an unbiased estimate of the canonical
solution) and the gains with the all-ones vector, then descends f with the
signal gradient and the zero-sum-projected gain gradient. Steps come either
from exact per-block line searches or from a fixed step pair
``(mu, mu * m / ||xi_0||^2)``; each gain update may be re-projected onto
C_rho. Iteration stops when the objective drops below the tolerance, the
iteration budget runs out, or the objective stagnates.

Note on the line searches: each step is the exact minimiser of the 1-d
quadratic along the descent direction, computed in closed form from the
residuals. Because the directions are the gradient blocks themselves, the
numerators reduce to mp times the squared direction norms.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import DivergenceError, ParameterError, TheoryRangeWarning
from .model import GroundTruth, Point, as_point, ensemble_dims
from .objective import adjoint, forward, gradients, objective_value

LINE_SEARCH = "line_search"
FIXED = "fixed"

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
STAGNATED = "stagnated"

# Trace thinning: record every iteration up to this count, then every 10th.
TRACE_DENSE_LIMIT = 10_000


@dataclass(frozen=True)
class SolverConfig:
    step_mode: str = LINE_SEARCH
    mu: float | None = None  # signal step for fixed mode
    rho: float = 0.0
    objective_tolerance: float = 1e-7
    max_iterations: int = 100_000
    apply_C_rho_projection: bool = True
    record_trace: bool = True
    stagnation_window: int = 100
    stagnation_rtol: float = 1e-14

    def __post_init__(self):
        if self.step_mode not in (LINE_SEARCH, FIXED):
            raise ParameterError(f"unknown step mode {self.step_mode!r}")
        if self.step_mode == FIXED and (self.mu is None or self.mu <= 0):
            raise ParameterError("fixed step mode requires mu > 0")
        if not 0.0 <= self.rho < 1.0:
            raise ParameterError(f"rho must lie in [0, 1), got {self.rho}")
        if self.objective_tolerance <= 0.0:
            raise ParameterError("objective_tolerance must be positive")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be at least 1")


@dataclass(frozen=True)
class SolverState:
    xi: np.ndarray
    gamma: np.ndarray
    iteration: int
    objective: float


@dataclass
class SolverTrace:
    """Per-iteration history; delta columns stay None without ground truth."""

    iteration: list[int] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    mu_xi: list[float] = field(default_factory=list)
    mu_gamma: list[float] = field(default_factory=list)
    delta: list[float | None] = field(default_factory=list)
    delta_F: list[float | None] = field(default_factory=list)
    elapsed_seconds: list[float] = field(default_factory=list)

    def record(self, state: SolverState, mu_xi: float, mu_gamma: float,
               elapsed: float, truth: GroundTruth | None):
        self.iteration.append(state.iteration)
        self.objective.append(state.objective)
        self.mu_xi.append(mu_xi)
        self.mu_gamma.append(mu_gamma)
        point = Point(state.xi, state.gamma)
        self.delta.append(geometry.delta(point, truth) if truth is not None else None)
        self.delta_F.append(geometry.delta_F(point, truth) if truth is not None else None)
        self.elapsed_seconds.append(elapsed)

    def __len__(self):
        return len(self.iteration)


def initialise(ensemble, y) -> tuple[np.ndarray, np.ndarray]:
    """Backprojection start: xi_0 = (1/mp) sum_l A_l^T y_l, gamma_0 = 1."""
    n, m, p = ensemble_dims(ensemble)
    y = np.asarray(y, dtype=float)
    xi0 = adjoint(ensemble, y) / (m * p)
    return xi0, np.ones(m)


def exact_line_search(state, ensemble, y) -> tuple[float, float]:
    """Exact minimisers of f along the two block descent directions.

    For direction g in the signal block the residual moves along
    s_l = gamma * (A_l g), so the minimiser of the 1-d quadratic is
    sum_l <r_l, s_l> / sum_l ||s_l||^2 = mp ||g||^2 / sum_l ||s_l||^2,
    and symmetrically for the projected gain direction. A vanishing
    direction (or image) yields step 0 for that block.
    """
    xi, gamma = as_point(state)
    n, m, p = ensemble_dims(ensemble)
    grads = gradients(ensemble, y, (xi, gamma))
    ax = forward(ensemble, xi)
    return _line_search_steps(ensemble, gamma, ax, grads, m * p)


def _line_search_steps(ensemble, gamma, ax, grads, mp) -> tuple[float, float]:
    g = grads.grad_xi
    h = grads.grad_gamma_projected

    num_xi = mp * float(g @ g)
    if num_xi == 0.0:
        mu_xi = 0.0
    else:
        image = gamma[None, :] * forward(ensemble, g)
        den = float(np.sum(image * image))
        mu_xi = num_xi / den if den > 0.0 else 0.0

    num_gamma = mp * float(h @ h)
    if num_gamma == 0.0:
        mu_gamma = 0.0
    else:
        image = ax * h[None, :]
        den = float(np.sum(image * image))
        mu_gamma = num_gamma / den if den > 0.0 else 0.0
    return mu_xi, mu_gamma


def _iterate(state: SolverState, config: SolverConfig, ensemble, y,
             fixed_steps=None):
    """One descent update; returns (new_state, mu_xi, mu_gamma)."""
    n, m, p = ensemble_dims(ensemble)
    xi, gamma = state.xi, state.gamma
    grads = gradients(ensemble, y, (xi, gamma))

    if config.step_mode == LINE_SEARCH:
        ax = forward(ensemble, xi)
        mu_xi, mu_gamma = _line_search_steps(ensemble, gamma, ax, grads, m * p)
    else:
        if fixed_steps is None:
            raise ParameterError(
                "fixed step mode needs explicit (mu_xi, mu_gamma); "
                "solve() derives mu_gamma = mu * m / ||xi_0||^2")
        mu_xi, mu_gamma = fixed_steps

    xi_next = xi - mu_xi * grads.grad_xi
    gamma_next = gamma - mu_gamma * grads.grad_gamma_projected
    iteration = state.iteration + 1
    if not (np.all(np.isfinite(xi_next)) and np.all(np.isfinite(gamma_next))):
        raise DivergenceError(
            f"iterate became non-finite at iteration {iteration}", iteration)
    if config.apply_C_rho_projection:
        gamma_next = geometry.project_C_rho(gamma_next, config.rho)

    with np.errstate(over="ignore"):  # overflow here is the divergence signal
        f_next = objective_value(ensemble, y, (xi_next, gamma_next))
    if not np.isfinite(f_next):
        raise DivergenceError(
            f"objective became non-finite at iteration {iteration}", iteration)
    return SolverState(xi_next, gamma_next, iteration, f_next), mu_xi, mu_gamma


def iterate(state: SolverState, config: SolverConfig, ensemble, y,
            fixed_steps=None) -> SolverState:
    """Apply one update of the descent (see _iterate for the step logic)."""
    new_state, _, _ = _iterate(state, config, ensemble, y, fixed_steps)
    return new_state


@dataclass
class SolveResult:
    x_hat: np.ndarray
    d_hat: np.ndarray
    trace: SolverTrace
    stop_reason: str
    iterations: int
    objective: float


def solve(ensemble, y, config: SolverConfig, truth: GroundTruth | None = None) -> SolveResult:
    """Run the full descent until convergence, stagnation, or the budget.

    The convergence test consumes the objective evaluated together with each
    gradient computation, i.e. the value at the point being stepped from; the
    loop therefore applies one final update after the objective first crosses
    the tolerance, and the returned objective sits below it.

    With ground truth supplied, the trace additionally records the distances
    delta and delta_F of each recorded iterate.
    """
    n, m, p = ensemble_dims(ensemble)
    t0 = time.perf_counter()
    xi0, gamma0 = initialise(ensemble, y)
    f0 = objective_value(ensemble, y, (xi0, gamma0))
    state = SolverState(xi0, gamma0, 0, f0)

    fixed_steps = None
    if config.step_mode == FIXED:
        norm0 = float(xi0 @ xi0)
        if norm0 == 0.0:
            raise ParameterError("zero initial signal estimate; cannot scale gain step")
        fixed_steps = (config.mu, config.mu * m / norm0)

    trace = SolverTrace()
    if config.record_trace:
        trace.record(state, 0.0, 0.0, time.perf_counter() - t0, truth)

    recent = [f0]
    if f0 < config.objective_tolerance:
        stop = CONVERGED
    else:
        while True:
            if state.iteration >= config.max_iterations:
                stop = MAX_ITERATIONS
                break
            if len(recent) > config.stagnation_window:
                old = recent[0]
                if (old - state.objective) < config.stagnation_rtol * max(old, 1e-300):
                    stop = STAGNATED
                    break
            previous_objective = state.objective
            state, mu_xi, mu_gamma = _iterate(state, config, ensemble, y, fixed_steps)
            recent.append(state.objective)
            if len(recent) > config.stagnation_window + 1:
                recent.pop(0)
            if config.record_trace and (state.iteration <= TRACE_DENSE_LIMIT
                                        or state.iteration % 10 == 0):
                trace.record(state, mu_xi, mu_gamma, time.perf_counter() - t0, truth)
            if previous_objective < config.objective_tolerance:
                stop = CONVERGED
                break

    if config.record_trace and (len(trace) == 0 or trace.iteration[-1] != state.iteration):
        trace.record(state, 0.0, 0.0, time.perf_counter() - t0, truth)
    return SolveResult(x_hat=state.xi, d_hat=state.gamma, trace=trace,
                       stop_reason=stop, iterations=state.iteration,
                       objective=state.objective)


# ---------------------------------------------------------------------------
# Convergence-theory diagnostics
# ---------------------------------------------------------------------------

def default_kappa(delta: float, rho: float) -> float:
    """Basin radius implied by an initialisation within delta * ||x*||."""
    return float(np.hypot(delta, rho))


@dataclass(frozen=True)
class ContractionDiagnostics:
    eta: float
    L: float
    tau: float
    factor: float
    mu_max: float


def contraction_diagnostics(rho: float, delta: float, kappa: float,
                            x_star_norm: float, m: int, mu: float) -> ContractionDiagnostics:
    """Constants of the guaranteed error decay and the per-iteration factor.

    eta = 2 (1 - 9 rho - 2 delta), L = 4 sqrt(2) (1 + rho + (1 + kappa) ||x*||),
    tau = min(1, ||x*||^2 / m); the squared distance contracts by
    1 - eta mu + (L^2 / tau) mu^2 per iteration for mu in (0, tau eta / L^2).
    A non-positive eta means the requirement rho < (1 - 2 delta) / 9 fails and
    the guarantee is void (empirical convergence may still occur).
    """
    eta = 2.0 * (1.0 - 9.0 * rho - 2.0 * delta)
    L = 4.0 * np.sqrt(2.0) * (1.0 + rho + (1.0 + kappa) * x_star_norm)
    tau = min(1.0, x_star_norm ** 2 / m)
    factor = 1.0 - eta * mu + (L ** 2 / tau) * mu ** 2
    mu_max = tau * eta / L ** 2
    if eta <= 0.0:
        warnings.warn(
            f"contraction guarantee void: eta = {eta:.3g} <= 0 "
            f"(requires rho < (1 - 2 delta) / 9)", TheoryRangeWarning, stacklevel=2)
    return ContractionDiagnostics(eta=eta, L=float(L), tau=float(tau),
                                  factor=float(factor), mu_max=float(mu_max))
