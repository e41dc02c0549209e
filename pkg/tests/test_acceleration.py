"""Coefficient solves, step formulas, diagnostics, and the run driver."""

import math

import numpy as np
import pytest

from accelkit.acceleration import (Coefficients, DepthState,
                                   FixedPointSolver, IterationHistory,
                                   aa_step, aag_step, adaptive_update,
                                   diagnostics, ls_coefficients, ngmres_step,
                                   run_solver, xi_to_alpha)
from accelkit.config import SolverConfig
from accelkit.exceptions import LinearSolveFailureError
from accelkit.linalg import gmres
from accelkit.norms import InnerProduct
from accelkit.problems import (FixedPointProblem, kappa_estimate,
                               quadratic_toy, richardson_problem)

RNG = np.random.default_rng(20260817)
EU = InnerProduct.euclidean()


def tridiag(n):
    return (np.diag(np.full(n, 2.0)) + np.diag(np.full(n - 1, -1.0), 1)
            + np.diag(np.full(n - 1, -1.0), -1))


def spd_random(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n))
    return m @ m.T + n * np.eye(n)


def config(**kw):
    base = dict(problem="richardson", method="aag", depth=2, adaptive=False,
                threshold=0.01, tol=1e-8, max_iter=500, opt_norm=None)
    base.update(kw)
    return SolverConfig(**base)


# ---------------------------------------------------------------------------
# least-squares coefficients


def test_ls_empty_diffs():
    base = np.array([3.0, 4.0])
    raw, obj = ls_coefficients(EU, base, [])
    assert raw.size == 0
    assert obj == pytest.approx(5.0)


def test_ls_exact_cancellation():
    d = RNG.standard_normal(6)
    raw, obj = ls_coefficients(EU, -d, [d])
    assert raw == pytest.approx(np.array([1.0]), rel=1e-12)
    assert obj == pytest.approx(0.0, abs=1e-12)


def test_ls_hand_example():
    raw, obj = ls_coefficients(EU, np.array([1.0, 0.0]),
                               [np.array([1.0, 1.0])])
    assert raw == pytest.approx(np.array([-0.5]), rel=1e-14)
    assert obj == pytest.approx(math.sqrt(2.0) / 2.0, rel=1e-14)
    # brute force over the coefficient line agrees
    grid = np.linspace(-2.0, 2.0, 4001)
    vals = [np.linalg.norm(np.array([1.0, 0.0]) + c * np.array([1.0, 1.0]))
            for c in grid]
    assert obj <= min(vals) + 1e-6


def test_ls_objective_never_exceeds_base_norm():
    for trial in range(50):
        n, m = 8, 4
        base = RNG.standard_normal(n)
        diffs = [RNG.standard_normal(n) for _ in range(m)]
        raw, obj = ls_coefficients(EU, base, diffs)
        assert obj <= np.linalg.norm(base) * (1.0 + 1e-10)
        resid = base + sum(c * d for c, d in zip(raw, diffs))
        assert obj == pytest.approx(np.linalg.norm(resid), rel=1e-8, abs=1e-10)


def test_ls_nested_window_monotonicity():
    n = 10
    base = RNG.standard_normal(n)
    diffs = [RNG.standard_normal(n) for _ in range(5)]
    prev = np.linalg.norm(base)
    for m in range(1, 6):
        # window grows oldest-first, newest diffs enter last
        _, obj = ls_coefficients(EU, base, diffs[5 - m:])
        assert obj <= prev + 1e-12
        prev = obj


def test_ls_duplicate_diffs_stay_finite():
    d = RNG.standard_normal(5)
    base = RNG.standard_normal(5)
    raw, obj = ls_coefficients(EU, base, [d, d])
    assert np.all(np.isfinite(raw))
    assert obj <= np.linalg.norm(base) * (1.0 + 1e-10)


# ---------------------------------------------------------------------------
# coefficient mapping and scalar diagnostics


def test_xi_to_alpha_examples():
    assert xi_to_alpha(np.zeros(0)) == pytest.approx(np.array([1.0]))
    assert xi_to_alpha(np.array([-0.5])) == pytest.approx(
        np.array([0.5, 0.5]))
    assert xi_to_alpha(np.array([1.0, 2.0])) == pytest.approx(
        np.array([-2.0, -1.0, 4.0]))


def test_xi_to_alpha_sums_to_one():
    for m in range(0, 6):
        alpha = xi_to_alpha(RNG.standard_normal(m))
        assert float(alpha.sum()) == pytest.approx(1.0, abs=1e-12)


def test_diagnostics_formulas():
    theta, gamma = diagnostics(0.5, 2.0, 1.0)
    assert theta == pytest.approx(0.5)
    assert gamma == pytest.approx(0.25)
    theta, _ = diagnostics(1.0, 5.0, 1.0)
    assert theta == pytest.approx(1.0)  # no gain
    with pytest.raises(ZeroDivisionError):
        diagnostics(0.5, 0.0, 1.0)
    with pytest.raises(ZeroDivisionError):
        diagnostics(0.5, 1.0, 0.0)


def test_adaptive_update_rule():
    state = DepthState(current_m=3, initial_m=3, adaptive=True,
                       threshold=0.01)
    same = adaptive_update(state, 0.9, 0.4)  # gap 0.5: no change
    assert same.current_m == 3
    bumped = adaptive_update(state, 0.9, 0.895)  # gap 0.005 < 0.01
    assert bumped.current_m == 4
    assert state.current_m == 3  # input state untouched
    twice = adaptive_update(bumped, 0.5, 0.5)
    assert twice.current_m == 5  # consecutive fires add exactly 1 each


# ---------------------------------------------------------------------------
# single-step oracles


def fresh_history(method, depth, u0, g_u0=None, ip=EU):
    hist = IterationHistory(method, ip, depth)
    hist.u_current = u0
    if method == "ngmres":
        hist.us.append(u0)
        hist.basis.append(g_u0)
        hist.g_norm_opt_current = math.sqrt(max(hist.basis.dot(-1, -1), 0.0))
    return hist


def test_aa_step_depth_zero_is_plain_map():
    u0 = RNG.standard_normal(4)
    q0 = RNG.standard_normal(4)
    hist = fresh_history("aa", 3, u0)
    u1, coeffs, diag = aa_step(hist, q0, EU)
    assert u1 is q0
    assert coeffs.raw.size == 0
    assert coeffs.alpha == pytest.approx(np.array([1.0]))
    assert diag.depth_used == 0
    assert diag.theta == pytest.approx(1.0)


def test_aa_step_stagnation_falls_back_to_map():
    u = RNG.standard_normal(4)
    q_eval = RNG.standard_normal(4)
    hist = fresh_history("aa", 2, u)
    hist.basis.append(q_eval - u)  # previous step had the same residual
    hist.qs.append(q_eval.copy())
    u_next, coeffs, _ = aa_step(hist, q_eval, EU)
    assert np.all(np.isfinite(coeffs.raw))
    assert u_next == pytest.approx(q_eval)


def test_aa_two_steps_match_scalar_normal_equation():
    n = 3
    rng = np.random.default_rng(7)
    m_map = 0.4 * rng.standard_normal((n, n))
    c = rng.standard_normal(n)
    u_star = np.linalg.solve(np.eye(n) - m_map, c)

    problem = FixedPointProblem(
        name="affine", dim=n,
        q_apply=lambda u: m_map @ u + c,
        g_apply=lambda u: (m_map @ u + c) - u,
        q_norm=EU, g_norm=EU,
        norms={"l2": EU, "h1": EU, "vprime": EU},
        initial_guess=np.zeros(n))
    trace = run_solver(problem, config(method="aa", depth=1, max_iter=2,
                                       opt_norm="l2"))
    # oracle: u1 = q(u0); tau from the one-parameter normal equation
    u0 = np.zeros(n)
    q0 = m_map @ u0 + c
    w0 = q0 - u0
    u1 = q0
    q1 = m_map @ u1 + c
    w1 = q1 - u1
    d = w1 - w0
    tau = -float(d @ w1) / float(d @ d)
    u2 = q1 + tau * (q1 - q0)
    assert trace.final_iterate == pytest.approx(u2, rel=1e-12, abs=1e-13)
    assert np.linalg.norm(u2 - u_star) < np.linalg.norm(u1 - u_star)


def test_ngmres_step_degenerate_residuals_stay_finite():
    u0 = RNG.standard_normal(5)
    g0 = RNG.standard_normal(5)
    q0 = RNG.standard_normal(5)
    hist = fresh_history("ngmres", 2, u0, g_u0=g0)
    u1, coeffs, _ = ngmres_step(hist, q0, g0.copy(), EU)  # g(q) == g(u0)
    assert np.all(np.isfinite(u1))
    assert coeffs.raw.shape == (1,)


def test_ngmres_scalar_lands_exactly():
    a, b, omega = 2.0, 3.0, 0.3
    problem = richardson_problem(np.array([[a]]), np.array([b]), omega)
    trace = run_solver(problem, config(method="ngmres", depth=2, tol=1e-13))
    assert trace.status == "converged"
    assert trace.iterations == 1
    assert trace.final_iterate == pytest.approx(np.array([b / a]), rel=1e-12)


def test_aag_step_depth_zero_objective_is_residual_norm():
    u0 = RNG.standard_normal(4)
    q0 = RNG.standard_normal(4)
    gq0 = RNG.standard_normal(4)
    hist = fresh_history("aag", 3, u0)
    hist.g_norm_opt_current = 1.0
    u1, coeffs, diag, gap = aag_step(hist, q0, gq0, EU)
    assert u1 is q0
    assert diag.objective == pytest.approx(np.linalg.norm(gq0), rel=1e-12)
    assert diag.theta == pytest.approx(1.0)
    assert gap == 0.0


def test_aag_step_stagnation_falls_back_to_map():
    u = RNG.standard_normal(4)
    q_eval = RNG.standard_normal(4)
    g_q = RNG.standard_normal(4)
    hist = fresh_history("aag", 1, u)
    hist.basis.append(g_q.copy())  # identical previous map-output residual
    hist.qs.append(RNG.standard_normal(4))
    hist.g_norm_opt_current = 1.0
    u_next, coeffs, _, _ = aag_step(hist, q_eval, g_q, EU)
    assert np.all(np.isfinite(coeffs.raw))
    assert u_next == pytest.approx(q_eval)


def test_aag_one_step_matches_symbolic_gram_on_toy():
    problem = quadratic_toy(2, seed=5)
    trace = run_solver(problem, config(method="aag", depth=1, max_iter=2))
    q, g = problem.q_apply, problem.g_apply
    u0 = problem.initial_guess
    q0 = q(u0)
    u1 = q0                     # depth-0 first step
    q1 = q(u1)
    base = g(q1)
    diff = base - g(q0)
    xi = -float(diff @ base) / float(diff @ diff)
    u2 = q1 + xi * (q1 - q0)
    assert trace.final_iterate == pytest.approx(u2, rel=1e-12, abs=1e-14)


# ---------------------------------------------------------------------------
# naive reference implementations (lstsq, no shared bookkeeping)


def naive_run(problem, method, m, iters):
    q, g = problem.q_apply, problem.g_apply
    us = [problem.initial_guess.copy()]
    qs, w_hist, gq_hist = [], [], []
    g_us = [g(us[0])]
    norms = [np.linalg.norm(g_us[0])]
    for k in range(iters):
        qk = q(us[-1])
        mk = min(k, m)
        if method == "aa":
            wk = qk - us[-1]
            w_hist.append(wk)
            diffs = [wk - w_hist[-1 - i] for i in range(1, mk + 1)]
            coef = _lstsq(diffs, wk)
            u_next = qk + sum(coef[i - 1] * (qk - qs[-i])
                              for i in range(1, mk + 1))
        elif method == "aag":
            gqk = g(qk)
            gq_hist.append(gqk)
            diffs = [gqk - gq_hist[-1 - i] for i in range(1, mk + 1)]
            coef = _lstsq(diffs, gqk)
            u_next = qk + sum(coef[i - 1] * (qk - qs[-i])
                              for i in range(1, mk + 1))
        else:  # ngmres
            gqk = g(qk)
            diffs = [gqk - g_us[-1 - i] for i in range(0, mk + 1)]
            coef = _lstsq(diffs, gqk)
            u_next = qk + sum(coef[i] * (qk - us[-1 - i])
                              for i in range(0, mk + 1))
        qs.append(qk)
        us.append(u_next)
        g_us.append(g(u_next))
        norms.append(np.linalg.norm(g_us[-1]))
    return np.array(norms), us


def _lstsq(diffs, base):
    if not diffs:
        return np.zeros(0)
    d_mat = np.stack(diffs, axis=1)
    coef, *_ = np.linalg.lstsq(d_mat, -base, rcond=None)
    return coef


@pytest.mark.parametrize("method", ["aa", "ngmres", "aag"])
@pytest.mark.parametrize("depth", [1, 2, 3])
def test_runs_match_naive_reference(method, depth):
    a = spd_random(8, seed=3)
    b = np.random.default_rng(4).standard_normal(8)
    omega = 1.0 / np.linalg.eigvalsh(a)[-1]
    problem = richardson_problem(a, b, omega)
    iters = 10
    trace = run_solver(problem, config(method=method, depth=depth,
                                       tol=1e-14, max_iter=iters))
    got = trace.column("g_norm_vprime")
    n_rows = got.shape[0]
    assert n_rows >= 7  # enough steps for the comparison to mean something
    ref_norms, ref_us = naive_run(problem, method, depth, n_rows - 1)
    np.testing.assert_allclose(got, ref_norms, rtol=1e-8, atol=1e-13)
    np.testing.assert_allclose(trace.final_iterate, ref_us[-1],
                               rtol=1e-8, atol=1e-12)


# ---------------------------------------------------------------------------
# run driver behavior


@pytest.mark.parametrize("method", ["picard", "aa", "ngmres", "aag"])
def test_constant_map_converges_first_step(method):
    n = 5
    u_star = RNG.standard_normal(n)
    problem = FixedPointProblem(
        name="constant", dim=n,
        q_apply=lambda u: u_star.copy(),
        g_apply=lambda u: u_star - u,
        q_norm=EU, g_norm=EU,
        norms={"l2": EU, "h1": EU, "vprime": EU},
        initial_guess=np.zeros(n))
    trace = run_solver(problem, config(method=method, depth=2, tol=1e-12))
    assert trace.status == "converged"
    assert trace.iterations == 1
    assert trace.final_iterate == pytest.approx(u_star, abs=1e-12)


def test_aag_full_depth_matches_gmres_from_map_output():
    n = 10
    a = spd_random(n, seed=11)
    b = np.random.default_rng(12).standard_normal(n)
    omega = 1.0 / np.linalg.eigvalsh(a)[-1]
    problem = richardson_problem(a, b, omega)
    trace = run_solver(problem, config(method="aag", depth=math.inf,
                                       tol=1e-12, max_iter=9))
    q0 = problem.q_apply(problem.initial_guess)
    _, res = gmres(lambda v: a @ v, b, x0=q0, rel_tol=1e-14, max_it=9)
    g_norms = trace.column("g_norm_vprime")
    n_cmp = min(len(g_norms) - 1, len(res))
    np.testing.assert_allclose(g_norms[1:1 + n_cmp], res[:n_cmp], rtol=1e-8)


def test_ngmres_full_depth_matches_gmres_directly():
    n = 10
    a = spd_random(n, seed=21)
    b = np.random.default_rng(22).standard_normal(n)
    omega = 1.0 / np.linalg.eigvalsh(a)[-1]
    problem = richardson_problem(a, b, omega)
    trace = run_solver(problem, config(method="ngmres", depth=math.inf,
                                       tol=1e-12, max_iter=9))
    _, res = gmres(lambda v: a @ v, b, x0=np.zeros(n), rel_tol=1e-14,
                   max_it=9)
    g_norms = trace.column("g_norm_vprime")
    n_cmp = min(len(g_norms), len(res))
    np.testing.assert_allclose(g_norms[:n_cmp], res[:n_cmp], rtol=1e-8,
                               atol=1e-14 * res[0])


def test_divergence_status():
    a = np.diag([1.0, 10.0])
    problem = richardson_problem(a, np.array([1.0, 1.0]), omega=0.5)
    # rho(I - omega A) = 4: Picard blows up
    trace = run_solver(problem, config(method="picard", depth=0,
                                       max_iter=200))
    assert trace.status == "diverged"
    assert trace.final_g_norm > 1e8 * trace.records[0].g_norm_vprime


def test_max_iter_status():
    a = tridiag(12)
    problem = richardson_problem(a, np.eye(12)[0], omega=0.25)
    trace = run_solver(problem, config(method="picard", depth=0, max_iter=3))
    assert trace.status == "max_iter"
    assert trace.iterations == 3


def test_linear_solve_failure_status():
    calls = {"n": 0}

    def flaky_q(u):
        calls["n"] += 1
        if calls["n"] >= 3:
            raise LinearSolveFailureError("inner solve broke")
        return 0.5 * u + 1.0

    problem = FixedPointProblem(
        name="flaky", dim=2,
        q_apply=flaky_q, g_apply=lambda u: (0.5 * u + 1.0) - u,
        q_norm=EU, g_norm=EU,
        norms={"l2": EU, "h1": EU, "vprime": EU},
        initial_guess=np.zeros(2))
    trace = run_solver(problem, config(method="picard", depth=0))
    assert trace.status == "linear_solve_failure"
    assert trace.iterations == 2


def test_picard_rows_have_unit_theta_and_ratio_gamma():
    a = tridiag(10)
    problem = richardson_problem(a, np.eye(10)[0], omega=0.25)
    trace = run_solver(problem, config(method="picard", depth=0, max_iter=20))
    theta = trace.column("theta")
    gamma = trace.column("gamma")
    ratio = trace.column("ratio")
    assert np.all(theta[1:] == 1.0)
    np.testing.assert_allclose(gamma[1:], ratio[1:], rtol=1e-14)
    assert math.isnan(theta[0]) and math.isnan(gamma[0])


def test_theta_bounded_across_methods_and_depths():
    a = spd_random(9, seed=31)
    b = np.random.default_rng(32).standard_normal(9)
    omega = 1.0 / np.linalg.eigvalsh(a)[-1]
    problem = richardson_problem(a, b, omega)
    for method in ("picard", "aa", "ngmres", "aag"):
        for depth in (0, 1, 3, math.inf):
            trace = run_solver(problem, config(method=method, depth=depth,
                                               max_iter=15))
            theta = trace.column("theta")
            finite = theta[np.isfinite(theta)]
            assert np.all(finite <= 1.0 + 1e-8), (method, depth)


def test_trace_column_consistency():
    problem = quadratic_toy(6, seed=9)
    trace = run_solver(problem, config(problem="toy", method="aag", depth=3,
                                       max_iter=40))
    g = trace.column("g_norm_vprime")
    ratio = trace.column("ratio")
    np.testing.assert_allclose(ratio[1:], g[1:] / g[:-1], rtol=1e-13)
    ks = trace.column("k")
    assert np.array_equal(ks, np.arange(len(ks)))
    depth_used = trace.column("depth_used")
    assert np.array_equal(depth_used,
                          np.minimum(ks, 3))
    assert np.all(np.diff(trace.column("q_solves")) == 1)
    assert np.all(trace.column("wall_ms") >= 0.0)
    assert trace.column("riesz_solves")[-1] == 0  # all-euclidean problem
    # map residual column: present everywhere except the final row
    resid = trace.column("picard_resid_h1")
    assert np.all(np.isfinite(resid[:-1]))
    assert math.isnan(resid[-1])


def test_aa_has_nan_gamma_and_q_norm_theta_label():
    a = tridiag(8)
    problem = richardson_problem(a, np.eye(8)[0], omega=0.25)
    trace = run_solver(problem, config(method="aa", depth=2, max_iter=10))
    assert trace.theta_label == "theta_q"
    assert np.all(np.isnan(trace.column("gamma")))


def test_aag_form_gap_small():
    problem = quadratic_toy(6, seed=13)
    trace = run_solver(problem, config(problem="toy", method="aag", depth=3,
                                       max_iter=30))
    assert trace.status == "converged"
    assert trace.alpha_form_gap <= 1e-12


def test_adaptive_on_linear_problem_fires_every_iteration():
    # with a linear residual the rate predictor is exact, so once the
    # trigger window opens the cap must step up by one per iteration
    a = tridiag(20)
    problem = richardson_problem(a, np.eye(20)[0], omega=0.25)
    trace = run_solver(problem, config(method="aag", depth=1, adaptive=True,
                                       max_iter=12, tol=1e-13))
    assert trace.trigger_rows == list(range(2, trace.iterations + 1))
    depth_used = trace.column("depth_used")
    steps = np.diff(depth_used)
    assert np.all((steps == 0) | (steps == 1))
    assert trace.final_m == 1 + len(trace.trigger_rows)


def test_depth_cap_never_decreases_without_trigger():
    problem = quadratic_toy(5, seed=17)
    trace = run_solver(problem, config(problem="toy", method="aag", depth=2,
                                       max_iter=25))
    assert trace.final_m == 2
    assert trace.trigger_rows == []


def test_kappa_estimate_geometric_and_spectral():
    from accelkit.trace import IterationRecord, Trace
    rows = []
    r = 0.5
    for k in range(9):
        rows.append(IterationRecord(
            k=k, g_norm_vprime=r ** k, picard_resid_h1=r ** k,
            theta=1.0, gamma=math.nan, ratio=math.nan, depth_used=0,
            max_abs_alpha=1.0, q_solves=k, riesz_solves=0, wall_ms=0.0))
    rows[-1].picard_resid_h1 = math.nan
    t = Trace(records=rows)
    assert kappa_estimate(t) == pytest.approx(r, rel=1e-12)

    a = tridiag(10)
    problem = richardson_problem(a, np.eye(10)[0], omega=0.25)
    trace = run_solver(problem, config(method="picard", depth=0,
                                       max_iter=300, tol=1e-10))
    rho = np.max(np.abs(np.linalg.eigvals(np.eye(10) - 0.25 * a)))
    assert kappa_estimate(trace) == pytest.approx(rho, rel=0.05)


def test_kappa_estimate_needs_iterations():
    from accelkit.exceptions import InsufficientDataError
    a = tridiag(6)
    problem = richardson_problem(a, np.eye(6)[0], omega=0.25)
    trace = run_solver(problem, config(method="picard", depth=0, max_iter=3))
    with pytest.raises(InsufficientDataError):
        kappa_estimate(trace)


def test_estimator_front_end():
    a = tridiag(10)
    problem = richardson_problem(a, np.eye(10)[0], omega=0.25)
    solver = FixedPointSolver(method="aag", depth=2, tol=1e-10)
    params = solver.get_params()
    assert params["method"] == "aag" and params["depth"] == 2
    solver.set_params(depth=3).fit(problem)
    assert solver.status_ == "converged"
    assert solver.n_iter_ == solver.trace_.iterations
    resid = np.eye(10)[0] - a @ solver.solution_
    assert np.linalg.norm(resid) <= 1e-9
    with pytest.raises(ValueError):
        solver.set_params(bogus=1)


def test_estimator_accepts_infinite_depth_string_free():
    a = tridiag(8)
    problem = richardson_problem(a, np.eye(8)[0], omega=0.25)
    solver = FixedPointSolver(method="ngmres", depth=math.inf, tol=1e-10)
    solver.fit(problem)
    assert solver.status_ == "converged"
