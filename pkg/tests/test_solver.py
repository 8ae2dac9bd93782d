import numpy as np
import pytest

from blindcal.errors import DivergenceError, ParameterError, TheoryRangeWarning
from blindcal.experiments import draw_instance, recovery_error
from blindcal.geometry import delta, draw_gain_perturbation
from blindcal.model import GroundTruth, generate_ensemble, sense
from blindcal.objective import objective_value
from blindcal.solver import (CONVERGED, FIXED, LINE_SEARCH, MAX_ITERATIONS,
                             SolverConfig, SolverState, contraction_diagnostics,
                             default_kappa, exact_line_search, initialise,
                             iterate, solve)


def make_instance(n=8, m=6, p=4, rho=0.3, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    d = draw_gain_perturbation(m, rho, seed + 1)
    truth = GroundTruth(x=x, d=d, rho=rho)
    ensemble = generate_ensemble(n, m, p, "gaussian", seed + 2)
    return truth, ensemble, sense(ensemble, x, d)


def state_at(ensemble, y, xi, gamma, k=0):
    return SolverState(np.asarray(xi, float), np.asarray(gamma, float), k,
                       objective_value(ensemble, y, (xi, gamma)))


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------

def test_gamma_starts_at_ones():
    truth, ensemble, y = make_instance()
    _, gamma0 = initialise(ensemble, y)
    np.testing.assert_array_equal(gamma0, np.ones(truth.m))


def test_initialisation_concentrates():
    n, m, p = 32, 16, 5000
    x = np.zeros(n)
    x[0] = 1.0
    ensemble = generate_ensemble(n, m, p, "gaussian", 7)
    y = sense(ensemble, x, np.ones(m))
    xi0, _ = initialise(ensemble, y)
    assert np.linalg.norm(xi0 - x) <= 0.1


# ---------------------------------------------------------------------------
# exact line search
# ---------------------------------------------------------------------------

def test_line_search_zero_at_truth():
    truth, ensemble, y = make_instance()
    state = state_at(ensemble, y, truth.x_star, truth.d_star)
    assert exact_line_search(state, ensemble, y) == (0.0, 0.0)


def test_line_search_is_local_minimum():
    truth, ensemble, y = make_instance(seed=3)
    rng = np.random.default_rng(4)
    xi = truth.x + 0.3 * rng.standard_normal(truth.n)
    gamma = truth.d + 0.1 * rng.uniform(-1, 1, truth.m)
    state = state_at(ensemble, y, xi, gamma)
    mu_xi, _ = exact_line_search(state, ensemble, y)
    from blindcal.objective import gradients
    g = gradients(ensemble, y, (xi, gamma)).grad_xi

    def f_along(mu):
        return objective_value(ensemble, y, (xi - mu * g, gamma))

    best = f_along(mu_xi)
    assert best <= f_along(mu_xi * 1.01)
    assert best <= f_along(mu_xi * 0.99)


def test_line_search_matches_dense_scan():
    truth, ensemble, y = make_instance(n=3, m=4, p=2, seed=5)
    rng = np.random.default_rng(6)
    xi = truth.x + 0.5 * rng.standard_normal(3)
    gamma = truth.d + 0.1 * rng.uniform(-1, 1, 4)
    state = state_at(ensemble, y, xi, gamma)
    mu_xi, _ = exact_line_search(state, ensemble, y)
    from blindcal.objective import gradients
    g = gradients(ensemble, y, (xi, gamma)).grad_xi
    grid = np.linspace(0.0, 4.0 * mu_xi, 10_000)
    values = [objective_value(ensemble, y, (xi - mu * g, gamma)) for mu in grid]
    best = grid[int(np.argmin(values))]
    assert abs(best - mu_xi) <= grid[1] - grid[0]


# ---------------------------------------------------------------------------
# single iteration
# ---------------------------------------------------------------------------

def test_truth_is_fixed_point():
    truth, ensemble, y = make_instance()
    config = SolverConfig(step_mode=LINE_SEARCH, rho=truth.rho)
    state = state_at(ensemble, y, truth.x_star, truth.d_star)
    after = iterate(state, config, ensemble, y)
    np.testing.assert_allclose(after.xi, truth.x_star, atol=1e-14)
    np.testing.assert_allclose(after.gamma, truth.d_star, atol=1e-14)
    assert after.iteration == 1


def test_guaranteed_step_range_decreases_distance():
    rho, delta_param = 0.01, 0.05
    truth, ensemble, y = make_instance(n=16, m=8, p=64, rho=rho, seed=9)
    norm = float(np.linalg.norm(truth.x_star))
    diag = contraction_diagnostics(rho, delta_param, default_kappa(delta_param, rho),
                                   norm, truth.m, mu=0.0)
    assert diag.eta > 0
    mu = 0.5 * diag.mu_max
    config = SolverConfig(step_mode=FIXED, mu=mu, rho=rho)
    rng = np.random.default_rng(10)
    for _ in range(5):
        xi = truth.x_star + delta_param * norm * 0.5 * rng.standard_normal(truth.n)
        gamma = np.ones(truth.m)
        state = state_at(ensemble, y, xi, gamma)
        fixed = (mu, mu * truth.m / norm ** 2)
        after = iterate(state, config, ensemble, y, fixed_steps=fixed)
        assert delta((after.xi, after.gamma), truth) <= delta((xi, gamma), truth)


def test_projection_keeps_gamma_feasible():
    truth, ensemble, y = make_instance(rho=0.3, seed=13)
    config = SolverConfig(step_mode=LINE_SEARCH, rho=0.3, apply_C_rho_projection=True)
    rng = np.random.default_rng(14)
    xi = truth.x + rng.standard_normal(truth.n)
    state = state_at(ensemble, y, xi, np.ones(truth.m))
    for _ in range(5):
        state = iterate(state, config, ensemble, y)
        assert abs(state.gamma.sum() - truth.m) <= 1e-9 * truth.m
        assert np.max(np.abs(state.gamma - 1.0)) <= 0.3 + 1e-9


def test_fixed_mode_requires_steps():
    truth, ensemble, y = make_instance()
    config = SolverConfig(step_mode=FIXED, mu=1e-3, rho=truth.rho)
    state = state_at(ensemble, y, truth.x, np.ones(truth.m))
    with pytest.raises(ParameterError):
        iterate(state, config, ensemble, y)


def test_divergent_step_raises():
    truth, ensemble, y = make_instance()
    config = SolverConfig(step_mode=FIXED, mu=1e12, rho=truth.rho,
                          max_iterations=50)
    with pytest.raises(DivergenceError) as err:
        solve(ensemble, y, config)
    assert err.value.iteration is not None


# ---------------------------------------------------------------------------
# full solve
# ---------------------------------------------------------------------------

def test_end_to_end_recovery():
    inst = draw_instance(64, 16, 64, 0.05, seed=1)
    config = SolverConfig(step_mode=LINE_SEARCH, rho=0.05,
                          objective_tolerance=1e-7)
    result = solve(inst.ensemble, inst.y, config, truth=inst.truth)
    assert result.stop_reason == CONVERGED
    assert recovery_error(result.x_hat, result.d_hat, inst.truth) < 10 ** (-70 / 20)


def test_rho_zero_reduces_to_least_squares():
    n, m, p = 16, 8, 8
    rng = np.random.default_rng(20)
    x = rng.standard_normal(n)
    ensemble = generate_ensemble(n, m, p, "gaussian", 21)
    y = sense(ensemble, x, np.ones(m))
    config = SolverConfig(step_mode=LINE_SEARCH, rho=0.0,
                          objective_tolerance=1e-26, max_iterations=20_000)
    result = solve(ensemble, y, config)
    np.testing.assert_array_equal(result.d_hat, np.ones(m))
    assert np.linalg.norm(result.x_hat - x) <= 1e-8 * np.linalg.norm(x)


def test_deterministic_traces():
    inst = draw_instance(24, 8, 16, 0.2, seed=33)
    config = SolverConfig(step_mode=LINE_SEARCH, rho=0.2, objective_tolerance=1e-9)
    a = solve(inst.ensemble, inst.y, config, truth=inst.truth)
    b = solve(inst.ensemble, inst.y, config, truth=inst.truth)
    assert a.trace.objective == b.trace.objective
    assert a.trace.mu_xi == b.trace.mu_xi
    assert a.trace.delta == b.trace.delta
    assert a.iterations == b.iterations


def test_max_iterations_stop():
    inst = draw_instance(32, 8, 16, 0.2, seed=40)
    config = SolverConfig(step_mode=LINE_SEARCH, rho=0.2,
                          objective_tolerance=1e-12, max_iterations=3)
    result = solve(inst.ensemble, inst.y, config)
    assert result.stop_reason == MAX_ITERATIONS
    assert result.iterations == 3


def test_underdetermined_instance_converges_to_wrong_solution():
    # mp < n + m leaves the data consistent with many (xi, gamma); the descent
    # reaches a residual zero that is far from the planted truth
    inst = draw_instance(32, 8, 1, 0.9, seed=41)
    config = SolverConfig(step_mode=LINE_SEARCH, rho=0.9,
                          objective_tolerance=1e-9, max_iterations=5000)
    result = solve(inst.ensemble, inst.y, config, truth=inst.truth)
    assert recovery_error(result.x_hat, result.d_hat, inst.truth) > 10 ** (-70 / 20)


def test_stagnation_guard():
    # a tolerance below what floating point can reach forces the guard
    n, m, p = 12, 6, 6
    rng = np.random.default_rng(70)
    x = rng.standard_normal(n)
    ensemble = generate_ensemble(n, m, p, "gaussian", 71)
    y = sense(ensemble, x, np.ones(m))
    config = SolverConfig(step_mode=LINE_SEARCH, rho=0.0,
                          objective_tolerance=1e-40, max_iterations=50_000)
    result = solve(ensemble, y, config)
    assert result.stop_reason == "stagnated"
    assert result.objective < 1e-25


def test_trace_thins_after_dense_limit():
    import blindcal.solver as solver_mod
    inst = draw_instance(10, 4, 6, 0.1, seed=77)
    config = SolverConfig(step_mode=FIXED, mu=1e-12, rho=0.1,
                          objective_tolerance=1e-30, max_iterations=120)
    old = solver_mod.TRACE_DENSE_LIMIT
    solver_mod.TRACE_DENSE_LIMIT = 50
    try:
        result = solve(inst.ensemble, inst.y, config)
    finally:
        solver_mod.TRACE_DENSE_LIMIT = old
    ks = result.trace.iteration
    assert ks[:51] == list(range(51))  # dense up to the limit
    later = [k for k in ks[51:] if k != 120]
    assert later and all(k % 10 == 0 for k in later)  # thinned afterwards
    assert ks[-1] == 120  # final state always recorded


def test_xi_block_line_search_monotone():
    inst = draw_instance(24, 8, 24, 0.4, seed=44)
    config = SolverConfig(step_mode=LINE_SEARCH, rho=0.4, objective_tolerance=1e-10)
    state = SolverState(*initialise(inst.ensemble, inst.y), 0, 0.0)
    state = state_at(inst.ensemble, inst.y, state.xi, state.gamma)
    from blindcal.objective import gradients
    for _ in range(30):
        mu_xi, _ = exact_line_search(state, inst.ensemble, inst.y)
        g = gradients(inst.ensemble, inst.y, (state.xi, state.gamma)).grad_xi
        f_after_xi = objective_value(inst.ensemble, inst.y,
                                     (state.xi - mu_xi * g, state.gamma))
        assert f_after_xi <= state.objective * (1 + 1e-12)
        state = iterate(state, config, inst.ensemble, inst.y)
        if state.objective < 1e-14:
            break


def test_fixed_step_distance_decay_in_theory_range():
    rho, delta_param = 0.01, 0.05
    inst = draw_instance(16, 8, 128, rho, seed=50)
    truth = inst.truth
    norm = float(np.linalg.norm(truth.x_star))
    diag = contraction_diagnostics(rho, delta_param, default_kappa(delta_param, rho),
                                   norm, truth.m, mu=0.0)
    mu = 0.5 * diag.mu_max
    config = SolverConfig(step_mode=FIXED, mu=mu, rho=rho,
                          objective_tolerance=1e-9, max_iterations=4000)
    result = solve(inst.ensemble, inst.y, config, truth=truth)
    deltas = [v for v in result.trace.delta if v is not None]
    assert all(a >= b for a, b in zip(deltas, deltas[1:]))
    # log-linear decay until the tolerance bites
    assert deltas[-1] < deltas[0]


def test_gamma_stays_feasible_without_projection():
    inst = draw_instance(32, 8, 64, 0.2, seed=60)
    config = SolverConfig(step_mode=LINE_SEARCH, rho=0.2,
                          objective_tolerance=1e-7,
                          apply_C_rho_projection=False)
    result = solve(inst.ensemble, inst.y, config, truth=inst.truth)
    assert result.stop_reason == CONVERGED
    assert abs(result.d_hat.sum() - 8) <= 1e-9 * 8
    assert np.max(np.abs(result.d_hat - 1.0)) <= 0.2 + 1e-9


# ---------------------------------------------------------------------------
# contraction diagnostics
# ---------------------------------------------------------------------------

def test_diagnostics_zero_step():
    diag = contraction_diagnostics(0.05, 0.05, default_kappa(0.05, 0.05), 1.0, 8, 0.0)
    assert diag.factor == 1.0


def test_diagnostics_eta_at_origin():
    diag = contraction_diagnostics(0.0, 0.0, 0.0, 1.0, 8, 0.0)
    assert diag.eta == 2.0


def test_diagnostics_hand_computed():
    # rho = delta = kappa = 0, unit signal norm, m = 1
    diag = contraction_diagnostics(0.0, 0.0, 0.0, 1.0, 1, mu=1.0 / 128.0)
    assert diag.L == pytest.approx(8.0 * np.sqrt(2.0))
    assert diag.tau == 1.0
    assert diag.mu_max == pytest.approx(2.0 / 128.0)
    assert diag.factor == pytest.approx(1.0 - 1.0 / 128.0)


def test_diagnostics_warns_outside_theory():
    with pytest.warns(TheoryRangeWarning):
        contraction_diagnostics(0.5, 0.1, default_kappa(0.1, 0.5), 1.0, 8, 1e-4)
