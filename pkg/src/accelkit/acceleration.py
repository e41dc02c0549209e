"""Windowed acceleration of fixed-point iterations.

Given a map q and a residual g whose zero coincides with the fixed point,
each outer iteration extrapolates over a sliding window of history by solving
a small least-squares problem in a chosen inner product.  Three coefficient
families are implemented, differing in which residuals the minimization sees
and which history vectors enter the update:

* ``aa``      minimizes combinations of map residuals w_j = q(u_j) - u_j and
              extrapolates over map outputs.
* ``ngmres``  minimizes combinations of g at the current map output and at
              past accelerated iterates; extrapolates over past iterates.
              One more coefficient than the others at equal window depth.
* ``aag``     minimizes combinations of g evaluated at map outputs only;
              extrapolates over map outputs.  Equivalently a constrained
              affine combination of the map outputs (see xi_to_alpha); both
              update forms are computed and their agreement recorded.

The least-squares solve also yields two scalars:

* theta  = objective / (residual norm of the plain map step), the per-step
  gain over no acceleration; at most 1 up to round-off because the zero
  coefficient vector is admissible.
* gamma  = objective / (residual norm at the current iterate), a per-step
  linear rate predictor.  When gamma matches the observed ratio
  ||g(u_k)|| / ||g(u_{k-1})|| to within a small threshold, second-order
  history effects are evidently negligible and the adaptive controller
  widens the window by one.

Everything here is numpy + the local kernel; no per-iteration allocation is
avoided on principle, the target scale is desk-sized.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import (IndefiniteAfterRegularizationError,
                         LinearSolveFailureError)
from .linalg import solve_spd_regularized
from .norms import gram
from .trace import IterationRecord, Trace

__all__ = ["Coefficients", "StepDiagnostics", "DepthState",
           "IterationHistory", "ls_coefficients", "xi_to_alpha",
           "diagnostics", "adaptive_update", "aa_step", "ngmres_step",
           "aag_step", "run_solver", "FixedPointSolver"]

RIDGE_FALLBACK = 1e-12
DIVERGENCE_FACTOR = 1e8


# ---------------------------------------------------------------------------
# least-squares core

def _solve_normal_equations(g_mat, b_vec, base_sq):
    """Minimize ||base + sum_i c_i d_i||^2 given its Gram data.

    Returns (raw, objective).  A singular Gram matrix (stagnated or
    duplicated history) falls back to a tiny ridge, which keeps the solution
    finite and the achieved objective at or below ||base||.
    """
    m = len(b_vec)
    if m == 0:
        return np.zeros(0), math.sqrt(max(base_sq, 0.0))
    try:
        raw = solve_spd_regularized(g_mat, -b_vec, ridge=0.0)
    except IndefiniteAfterRegularizationError:
        raw = solve_spd_regularized(g_mat, -b_vec, ridge=RIDGE_FALLBACK)
    obj_sq = base_sq + 2.0 * float(raw @ b_vec) + float(raw @ (g_mat @ raw))
    return raw, math.sqrt(max(obj_sq, 0.0))


def ls_coefficients(ip, base, diffs, cache=None):
    """Coefficients minimizing ||base + sum_i raw_i * diffs[i]||_ip.

    ``diffs`` is ordered oldest to newest, like every history buffer in this
    module.  Returns (raw, objective); raw is empty and the objective is
    ||base|| when diffs is empty.
    """
    system = gram(ip, base, diffs, cache=cache)
    return _solve_normal_equations(system.g, system.b, system.base_sq)


def xi_to_alpha(xi):
    """Convert lag-indexed extrapolation weights to affine-combination form.

    ``xi[i-1]`` multiplies the difference against lag i (newest lag first,
    the natural index of the update formula).  The result is the coefficient
    vector over the window's candidate points ordered oldest to newest, whose
    last entry belongs to the newest point; it sums to 1 in exact arithmetic.

    >>> xi_to_alpha(np.array([1.0, 2.0]))
    array([-2., -1.,  4.])
    """
    xi = np.asarray(xi, dtype=np.float64)
    return np.concatenate([-xi[::-1], [1.0 + float(xi.sum())]])


def diagnostics(objective, g_norm_prev, g_norm_qk):
    """Per-step gain and rate predictor.

    theta = objective / g_norm_qk, gamma = objective / g_norm_prev.  Both
    denominators must be positive; a zero denominator raises
    ZeroDivisionError, which callers treat as an already-converged state.
    """
    return objective / g_norm_qk, objective / g_norm_prev


# ---------------------------------------------------------------------------
# value types

@dataclass
class Coefficients:
    """Solution of one window minimization.

    ``raw`` is ordered oldest to newest (reverse of the lag order used in
    update formulas); ``alpha`` is the equivalent affine-combination vector,
    also oldest to newest, summing to 1.
    """

    method: str
    raw: np.ndarray
    alpha: np.ndarray
    max_abs_alpha: float


@dataclass
class StepDiagnostics:
    objective: float
    theta: float
    gamma: float
    depth_used: int
    g_norm: float = math.nan            # monitored norm of the new iterate
    picard_resid_norm: float = math.nan  # ||q(u_k) - u_k|| in the map norm


@dataclass(frozen=True)
class DepthState:
    """Window-cap controller state; current_m never decreases."""

    current_m: float            # int or math.inf
    initial_m: float
    adaptive: bool = False
    threshold: float = 0.01


def adaptive_update(state, gamma_prev, observed_ratio):
    """Widen the window by one when the rate predictor proves sharp.

    Fires iff |gamma_prev - observed_ratio| < state.threshold, with both
    quantities taken from the same iteration.  Returns a new DepthState;
    the cap never decreases.
    """
    if abs(gamma_prev - observed_ratio) < state.threshold:
        return replace(state, current_m=state.current_m + 1)
    return state


# ---------------------------------------------------------------------------
# residual history

class ResidualBasis:
    """Growing residual history with a pairwise inner-product table.

    Appending a vector computes its metric image once and dots it against
    everything stored, so each residual costs exactly one Riesz solve over
    its whole lifetime (operator-inverse metric).  Gram systems for
    window minimizations are then assembled from the table without touching
    the vectors again.
    """

    def __init__(self, ip):
        self.ip = ip
        self.vecs = []
        self._dots = []  # row i holds <v_i, v_j> for j <= i

    def __len__(self):
        return len(self.vecs)

    def append(self, vec, image=None):
        if image is None:
            image = self.ip.image(vec)
        row = [float(old @ image) for old in self.vecs]
        row.append(float(vec @ image))
        self.vecs.append(vec)
        self._dots.append(row)

    def dot(self, i, j):
        i, j = (i % len(self.vecs)), (j % len(self.vecs))
        return self._dots[i][j] if j <= i else self._dots[j][i]

    def drop_oldest(self, count):
        if count <= 0:
            return
        del self.vecs[:count]
        del self._dots[:count]
        for row in self._dots:
            del row[:count]

    def row_against(self, vec, image=None):
        """Dots of a transient vector against all stored, plus its self-dot."""
        if image is None:
            image = self.ip.image(vec)
        return [float(old @ image) for old in self.vecs], float(vec @ image)

    def _gram_from_dots(self, self_dot, row, idxs):
        """Gram data for base with dot-row ``row``, diffs = base - v_i."""
        m = len(idxs)
        g_mat = np.empty((m, m))
        b_vec = np.empty(m)
        for a, i in enumerate(idxs):
            b_vec[a] = self_dot - row[i]
            for c in range(a, m):
                j = idxs[c]
                g_mat[a, c] = self_dot - row[i] - row[j] + self.dot(i, j)
        low = np.tril_indices(m, -1)
        g_mat[low] = g_mat.T[low]
        return g_mat, b_vec, max(self_dot, 0.0)

    def gram_newest(self, m):
        """Base = newest stored vector, diffs against the m entries before it."""
        last = len(self.vecs) - 1
        if m > last:
            raise ValueError("window exceeds stored history")
        row = [self.dot(last, j) for j in range(last)]
        return self._gram_from_dots(self.dot(last, last), row,
                                    list(range(last - m, last)))

    def gram_transient(self, vec, t, image=None):
        """Base = an unstored vector, diffs against the last t stored entries."""
        if t > len(self.vecs):
            raise ValueError("window exceeds stored history")
        row, self_dot = self.row_against(vec, image=image)
        idxs = list(range(len(self.vecs) - t, len(self.vecs)))
        return self._gram_from_dots(self_dot, row, idxs)


class IterationHistory:
    """Sliding window of iterates, map outputs, and residuals.

    All buffers are ordered oldest to newest and are trimmed after each
    step so they hold at most the window cap (plus the current point where
    the family includes it).  The residual basis member depends on the
    method: map residuals w_j for aa, g at map outputs for aag, g at
    accelerated iterates for ngmres.
    """

    def __init__(self, method, ip_opt, depth_cap):
        self.method = method
        self.ip_opt = ip_opt
        self.depth_cap = depth_cap
        self.basis = ResidualBasis(ip_opt)
        self.qs = []   # map outputs q(u_j)   (aa, aag updates)
        self.us = []   # iterates u_j          (ngmres updates, incl. current)
        self.u_current = None
        self.g_norm_opt_current = math.nan  # ||g(u_k)||_opt for gamma

    def window(self):
        """Depth m_k available to the next step."""
        if self.method == "ngmres":
            avail = len(self.us) - 1
        else:
            avail = len(self.qs)
        return int(min(avail, self.depth_cap))

    def trim(self):
        cap = self.depth_cap
        if cap == math.inf:
            return
        cap = int(cap)
        if self.method == "ngmres":
            drop = len(self.us) - (cap + 1)
            if drop > 0:
                del self.us[:drop]
            self.basis.drop_oldest(len(self.basis) - (cap + 1))
        else:
            drop = len(self.qs) - cap
            if drop > 0:
                del self.qs[:drop]
            self.basis.drop_oldest(len(self.basis) - cap)


# ---------------------------------------------------------------------------
# steps

def _coefficients_from(method, raw):
    alpha = xi_to_alpha(raw[::-1])  # raw is oldest-first; map wants lag order
    return Coefficients(method=method, raw=raw, alpha=alpha,
                        max_abs_alpha=float(np.max(np.abs(alpha))))


def _theta_gamma(objective, g_norm_prev, g_norm_qk):
    try:
        return diagnostics(objective, g_norm_prev, g_norm_qk)
    except ZeroDivisionError:
        return math.nan, math.nan


def aa_step(history, q_eval, ip_q):
    """One Anderson step from history.u_current given q_eval = q(u_k).

    Minimizes ||w_k + sum tau_i (w_k - w_{k-i})||_{ip_q} and extrapolates
    over map outputs.  history.basis must be the w-basis built with ip_q.
    """
    if ip_q is not history.ip_opt:
        raise ValueError("aa_step minimizes in the history's inner product; "
                         "ip_q must be that same object")
    w_k = q_eval - history.u_current
    history.basis.append(w_k)
    m_k = history.window()
    g_mat, b_vec, base_sq = history.basis.gram_newest(m_k)
    raw, objective = _solve_normal_equations(g_mat, b_vec, base_sq)
    u_next = _extrapolate(q_eval, history.qs, raw, m_k)
    w_norm = math.sqrt(base_sq)
    theta = objective / w_norm if w_norm > 0 else math.nan
    diag = StepDiagnostics(objective=objective, theta=theta, gamma=math.nan,
                           depth_used=m_k)
    return u_next, _coefficients_from("aa", raw), diag


def ngmres_step(history, q_eval, g_of_q_eval, ip_g):
    """One nonlinear-GMRES step.

    Minimizes ||g(q(u_k)) + sum beta_i (g(q(u_k)) - g(u_{k-i}))||_{ip_g}
    over i = 0..m_k and extrapolates over past iterates including u_k, so
    there is always at least one coefficient.
    """
    if ip_g is not history.ip_opt:
        raise ValueError("ngmres_step minimizes in the history's inner "
                         "product; ip_g must be that same object")
    m_k = history.window()
    g_mat, b_vec, base_sq = history.basis.gram_transient(g_of_q_eval, m_k + 1)
    raw, objective = _solve_normal_equations(g_mat, b_vec, base_sq)
    u_next = _extrapolate(q_eval, history.us, raw, m_k + 1)
    theta, gamma = _theta_gamma(objective, history.g_norm_opt_current,
                                math.sqrt(base_sq))
    diag = StepDiagnostics(objective=objective, theta=theta, gamma=gamma,
                           depth_used=m_k)
    return u_next, _coefficients_from("ngmres", raw), diag


def aag_step(history, q_eval, g_of_q_eval, ip_g):
    """One residual-minimizing Anderson step.

    Minimizes ||g(q(u_k)) + sum xi_i (g(q(u_k)) - g(q(u_{k-i})))||_{ip_g}
    and extrapolates over map outputs.  Also evaluates the equivalent
    affine-combination update and reports the relative gap between the two
    forms (they agree in exact arithmetic).

    Returns (u_next, Coefficients, StepDiagnostics, form_gap).
    """
    if ip_g is not history.ip_opt:
        raise ValueError("aag_step minimizes in the history's inner product; "
                         "ip_g must be that same object")
    history.basis.append(g_of_q_eval)
    m_k = history.window()
    g_mat, b_vec, base_sq = history.basis.gram_newest(m_k)
    raw, objective = _solve_normal_equations(g_mat, b_vec, base_sq)
    u_next = _extrapolate(q_eval, history.qs, raw, m_k)
    coeffs = _coefficients_from("aag", raw)
    form_gap = 0.0
    if m_k > 0:
        points = history.qs[len(history.qs) - m_k:] + [q_eval]
        u_cons = np.zeros_like(q_eval)
        for a_j, point in zip(coeffs.alpha, points):
            u_cons += a_j * point
        scale = float(np.linalg.norm(u_next))
        form_gap = float(np.linalg.norm(u_next - u_cons)) / max(scale, 1e-300)
    theta, gamma = _theta_gamma(objective, history.g_norm_opt_current,
                                math.sqrt(base_sq))
    diag = StepDiagnostics(objective=objective, theta=theta, gamma=gamma,
                           depth_used=m_k)
    return u_next, coeffs, diag, form_gap


def _extrapolate(q_eval, points, raw, count):
    """q_eval + sum_a raw[a] * (q_eval - tail(points, count)[a]).

    Returns q_eval itself (same object) when the correction vanishes, so
    callers can recognize a plain map step and reuse its residual.
    """
    if count == 0 or not np.any(raw):
        return q_eval
    tail = points[len(points) - count:]
    u_next = q_eval.copy()
    for coeff, point in zip(raw, tail):
        u_next += coeff * (q_eval - point)
    return u_next


# ---------------------------------------------------------------------------
# driver

def _as_depth(value):
    if value == math.inf:
        return math.inf
    depth = int(value)
    if depth < 0:
        raise ValueError("depth must be >= 0")
    return depth


def run_solver(problem, config):
    """Drive a fixed-point run to tolerance and record a Trace.

    ``config`` needs attributes method, depth, adaptive, threshold, tol,
    max_iter, and a resolved_opt_norm() (SolverConfig provides all).  The
    stopping rule tests the monitored residual norm before each step;
    divergence (1e8 times the initial norm, or non-finite) and inner linear
    solver failures end the run with a status, never an exception.
    """
    method = config.method
    tol = config.tol
    ip_mon = problem.g_norm
    ip_q = problem.q_norm
    depth = _as_depth(config.depth)
    state = DepthState(current_m=depth, initial_m=depth,
                       adaptive=bool(config.adaptive),
                       threshold=config.threshold)
    if method == "picard":
        ip_opt, hist = ip_mon, None
    else:
        ip_opt = problem.norms[config.resolved_opt_norm()]
        hist = IterationHistory(method, ip_opt, state.current_m)
    counted_ips = {id(ip): ip for ip in (ip_mon, ip_q, ip_opt)}

    def riesz_total():
        return sum(ip.solve_count for ip in counted_ips.values())

    t_start = time.perf_counter()
    u = np.array(problem.initial_guess, dtype=np.float64, copy=True)
    g_u = problem.g_apply(u)
    g_evals = 1
    q_solves = 0
    if method == "ngmres":
        # g(u_0) joins the family; share its image with the monitor norm
        # when the metrics coincide
        if ip_opt is ip_mon:
            img = ip_mon.image(g_u)
            hist.basis.append(g_u, image=img)
            g_norm = math.sqrt(max(float(g_u @ img), 0.0))
        else:
            hist.basis.append(g_u)
            g_norm = ip_mon.norm(g_u)
        hist.g_norm_opt_current = math.sqrt(max(hist.basis.dot(-1, -1), 0.0))
        hist.us.append(u)
    else:
        g_norm = ip_mon.norm(g_u)
        if hist is not None:
            # aa never reads this (its theta is w-based); do not force the
            # residual through an iterate-space norm
            if ip_opt is ip_mon:
                hist.g_norm_opt_current = g_norm
            elif method == "aag":
                hist.g_norm_opt_current = ip_opt.norm(g_u)
    if hist is not None:
        hist.u_current = u
    init_norm = g_norm
    records = [IterationRecord(
        k=0, g_norm_vprime=g_norm, picard_resid_h1=math.nan,
        theta=math.nan, gamma=math.nan, ratio=math.nan,
        depth_used=0, max_abs_alpha=math.nan, q_solves=0,
        riesz_solves=riesz_total(),
        wall_ms=(time.perf_counter() - t_start) * 1e3)]

    trigger_rows = []
    worst_form_gap = 0.0
    k = 0
    while True:
        if g_norm <= tol:
            status = "converged"
            break
        if not math.isfinite(g_norm) or g_norm > DIVERGENCE_FACTOR * init_norm:
            status = "diverged"
            break
        if k >= config.max_iter:
            status = "max_iter"
            break

        t_step = time.perf_counter()
        try:
            q_eval = problem.q_apply(u)
        except LinearSolveFailureError:
            status = "linear_solve_failure"
            break
        q_solves += 1
        records[k].picard_resid_h1 = ip_q.norm(q_eval - u)

        g_of_q = None
        try:
            if method == "picard":
                u_next = q_eval
                coeffs = Coefficients("picard", np.zeros(0),
                                      np.ones(1), 1.0)
                diag = StepDiagnostics(objective=math.nan, theta=1.0,
                                       gamma=math.nan, depth_used=0)
            elif method == "aa":
                u_next, coeffs, diag = aa_step(hist, q_eval, ip_opt)
            else:
                g_of_q = problem.g_apply(q_eval)
                g_evals += 1
                if method == "ngmres":
                    u_next, coeffs, diag = ngmres_step(
                        hist, q_eval, g_of_q, ip_opt)
                else:
                    u_next, coeffs, diag, gap = aag_step(
                        hist, q_eval, g_of_q, ip_opt)
                    worst_form_gap = max(worst_form_gap, gap)
        except IndefiniteAfterRegularizationError:
            status = "linear_solve_failure"
            break

        check = getattr(problem, "iterate_check", None)
        if check is not None:
            check(u_next)

        # residual + monitored norm at the new iterate; a step that landed
        # exactly on the map output reuses its residual evaluation
        if u_next is q_eval and g_of_q is not None:
            g_next, fresh = g_of_q, False
        else:
            g_next = problem.g_apply(u_next)
            g_evals += 1
            fresh = True
        if method == "ngmres":
            # g at the new iterate joins the family; share its image with
            # the monitor norm when the metrics coincide
            if ip_opt is ip_mon:
                img = ip_mon.image(g_next)
                hist.basis.append(g_next, image=img)
                g_next_norm = math.sqrt(max(float(g_next @ img), 0.0))
            else:
                hist.basis.append(g_next)
                g_next_norm = ip_mon.norm(g_next)
        elif method == "aag" and not fresh and ip_opt is ip_mon:
            # the basis already holds this residual's self-dot
            g_next_norm = math.sqrt(max(hist.basis.dot(-1, -1), 0.0))
        else:
            g_next_norm = ip_mon.norm(g_next)
        ratio = g_next_norm / g_norm
        if method == "picard":
            diag.objective = g_next_norm
            diag.gamma = ratio

        if (state.adaptive and method == "aag" and k + 1 >= 2
                and math.isfinite(diag.gamma)):
            bumped = adaptive_update(state, diag.gamma, ratio)
            if bumped.current_m > state.current_m:
                trigger_rows.append(k + 1)
            state = bumped

        if hist is not None:
            if method == "ngmres":
                hist.us.append(u_next)
                hist.g_norm_opt_current = math.sqrt(
                    max(hist.basis.dot(-1, -1), 0.0))
            else:
                hist.qs.append(q_eval)
                if ip_opt is ip_mon:
                    hist.g_norm_opt_current = g_next_norm
                elif method == "aag":
                    hist.g_norm_opt_current = ip_opt.norm(g_next)
            hist.u_current = u_next
            hist.depth_cap = state.current_m
            hist.trim()

        u, g_norm = u_next, g_next_norm
        k += 1
        records.append(IterationRecord(
            k=k, g_norm_vprime=g_next_norm, picard_resid_h1=math.nan,
            theta=diag.theta, gamma=diag.gamma, ratio=ratio,
            depth_used=int(min(k, state.current_m)),
            max_abs_alpha=coeffs.max_abs_alpha, q_solves=q_solves,
            riesz_solves=riesz_total(),
            wall_ms=(time.perf_counter() - t_step) * 1e3))

    trace = Trace(method=method, records=records, status=status,
                  final_iterate=u, final_m=state.current_m,
                  trigger_rows=trigger_rows, g_evals=g_evals,
                  alpha_form_gap=worst_form_gap,
                  theta_label="theta_q" if method == "aa" else "theta")
    return trace


# ---------------------------------------------------------------------------
# estimator front-end

class FixedPointSolver:
    """Estimator-style front end over run_solver.

    Parameters mirror the run configuration; fit(problem) executes the run
    and exposes solution_, trace_, n_iter_, and status_.
    """

    _PARAM_NAMES = ("method", "depth", "adaptive", "threshold", "tol",
                    "max_iter", "opt_norm")

    def __init__(self, method="aag", depth=2, adaptive=False, threshold=0.01,
                 tol=1e-8, max_iter=500, opt_norm=None):
        self.method = method
        self.depth = depth
        self.adaptive = adaptive
        self.threshold = threshold
        self.tol = tol
        self.max_iter = max_iter
        self.opt_norm = opt_norm

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._PARAM_NAMES}

    def set_params(self, **params):
        for name, value in params.items():
            if name not in self._PARAM_NAMES:
                raise ValueError(f"unknown parameter {name!r}")
            setattr(self, name, value)
        return self

    def resolved_opt_norm(self):
        from .config import OPT_NORM_DEFAULTS
        return self.opt_norm or OPT_NORM_DEFAULTS[self.method]

    def fit(self, problem):
        trace = run_solver(problem, self)
        self.trace_ = trace
        self.solution_ = trace.final_iterate
        self.n_iter_ = trace.iterations
        self.status_ = trace.status
        return self
