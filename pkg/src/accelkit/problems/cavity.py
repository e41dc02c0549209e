"""Staggered-grid lid-driven cavity: steady NSE via Picard iteration.

Grid: MAC layout on [0,1]^2 with N cells per side, h = 1/N.  x-velocities
live on vertical interior faces ((N-1) * N points), y-velocities on
horizontal interior faces (N * (N-1)), pressures at the N^2 cell centers
with the corner cell pinned to zero by symmetric row/column elimination.
Every equation is scaled by h^2, which turns the viscous term into the
plain 5-point stencil and keeps the assembled saddle matrix symmetric:
the pressure-gradient block in the momentum rows is exactly the transpose
of the (negated h^2-scaled) divergence block in the continuity rows.

Boundary handling: normal velocities sit on the boundary and are eliminated
as exact zeros; tangential velocities use linear reflection ghosts
(ghost = 2*wall - interior), which preserves matrix symmetry.  The moving
lid therefore contributes 2*nu*lid_speed to the right-hand side at the top
row of x-momentum equations and nothing anywhere else.

Convection is discretized in divergence form, d/dxj (a_j u_i), with central
two-point averages for both the convecting and the transported values.
Every boundary-normal convective flux vanishes identically because the
normal velocity does, so convection needs no ghost values, contributes
nothing to the right-hand side, and is exactly zero for a zero convecting
field; the convecting-field dependence of each matrix entry is linear.

The nonlinear residual g(u) is the momentum-row defect of the velocity
alone (pressure slots zero): with the pressure unknowns set to zero the
momentum rows of the assembled system evaluate nu*K u + C(u) u - rhs, and
the continuity rows are masked out.  Its natural norm is the dual norm
induced by the (factorized once) Stokes matrix restricted to the velocity
block, which is what the ``vprime`` inner product computes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from ..exceptions import LinearSolveFailureError, SingularMatrixError
from ..linalg import BandedMatrix, Factorization, lu_factor
from ..norms import InnerProduct
from . import FixedPointProblem

__all__ = ["MacGrid", "OseenSystem", "assemble_stokes", "assemble_oseen",
           "nse_q", "nse_g", "cavity_problem", "scatter_velocity",
           "gather_velocity", "divergence_values", "velocity_stiffness",
           "convection_skewness"]

MAX_BANDWIDTH_FACTOR = 8  # assembled band must stay within 8N of the diagonal


class MacGrid:
    """Index bookkeeping for the staggered cavity grid.

    Two orderings coexist.  The *velocity* layout (u raster rows-of-y first,
    then v raster) is the iterate vector seen by the fixed-point solver.
    The *saddle* layout interleaves u-face, v-face, and pressure unknowns
    per cell, walking cells column by column, which keeps the assembled
    matrix bandwidth at a small multiple of N.
    """

    def __init__(self, N, lid_speed=1.0):
        N = int(N)
        if N < 4:
            raise ValueError("N must be >= 4")
        self.N = N
        self.h = 1.0 / N
        self.lid_speed = float(lid_speed)
        self.n_u = (N - 1) * N
        self.n_v = N * (N - 1)
        self.n_p = N * N
        self.n_vel = self.n_u + self.n_v
        self.n_sad = self.n_u + self.n_v + self.n_p - 1

        # velocity layout: u(i, j) for i = 1..N-1 (face), j = 0..N-1 (row);
        # v(i, j) for i = 0..N-1 (column), j = 1..N-1 (face)
        self.vel_of_u = -np.ones((N + 1, N), dtype=np.intp)
        self.vel_of_v = -np.ones((N, N + 1), dtype=np.intp)
        for j in range(N):
            for i in range(1, N):
                self.vel_of_u[i, j] = j * (N - 1) + (i - 1)
        for j in range(1, N):
            for i in range(N):
                self.vel_of_v[i, j] = self.n_u + (j - 1) * N + i

        # saddle layout: per cell (ci, cj), column-major over cells, each
        # cell owns its right u-face, top v-face, and its pressure; the
        # corner pressure is pinned (no unknown)
        self.sad_of_u = -np.ones((N + 1, N), dtype=np.intp)
        self.sad_of_v = -np.ones((N, N + 1), dtype=np.intp)
        self.sad_of_p = -np.ones((N, N), dtype=np.intp)
        idx = 0
        for ci in range(N):
            for cj in range(N):
                if ci + 1 <= N - 1:
                    self.sad_of_u[ci + 1, cj] = idx
                    idx += 1
                if cj + 1 <= N - 1:
                    self.sad_of_v[ci, cj + 1] = idx
                    idx += 1
                if (ci, cj) != (0, 0):
                    self.sad_of_p[ci, cj] = idx
                    idx += 1
        assert idx == self.n_sad

        self.sad_of_vel = np.empty(self.n_vel, dtype=np.intp)
        for j in range(N):
            for i in range(1, N):
                self.sad_of_vel[self.vel_of_u[i, j]] = self.sad_of_u[i, j]
        for j in range(1, N):
            for i in range(N):
                self.sad_of_vel[self.vel_of_v[i, j]] = self.sad_of_v[i, j]
        self.velocity_mask = np.zeros(self.n_sad, dtype=bool)
        self.velocity_mask[self.sad_of_vel] = True

        self._stokes_struct = None
        self._conv_struct = None
        self._div_matrix = None

    def u_coords(self):
        """(x, y) of every u unknown, aligned with the velocity layout."""
        xs = np.empty(self.n_u)
        ys = np.empty(self.n_u)
        for j in range(self.N):
            for i in range(1, self.N):
                k = self.vel_of_u[i, j]
                xs[k] = i * self.h
                ys[k] = (j + 0.5) * self.h
        return xs, ys

    def v_coords(self):
        xs = np.empty(self.n_v)
        ys = np.empty(self.n_v)
        for j in range(1, self.N):
            for i in range(self.N):
                k = self.vel_of_v[i, j] - self.n_u
                xs[k] = (i + 0.5) * self.h
                ys[k] = j * self.h
        return xs, ys


@dataclass
class OseenSystem:
    matrix: BandedMatrix
    rhs: np.ndarray
    convecting_field: np.ndarray


def scatter_velocity(grid, vel):
    """Velocity-layout vector -> saddle-layout vector (pressure slots 0)."""
    out = np.zeros(grid.n_sad)
    out[grid.sad_of_vel] = vel
    return out


def gather_velocity(grid, sad):
    """Saddle-layout vector -> velocity-layout vector."""
    return np.asarray(sad, dtype=np.float64)[grid.sad_of_vel]


# ---------------------------------------------------------------------------
# assembly structures (built once per grid, cached)


def _stokes_structure(grid):
    """COO structure of the Stokes matrix plus the unit-viscosity lid rhs.

    Entry values split into a viscous part (multiplied by nu at assembly)
    and a fixed part (gradient/divergence, h-scaled).  Gradient entries are
    emitted together with their divergence transposes, so symmetry holds by
    construction.
    """
    if grid._stokes_struct is not None:
        return grid._stokes_struct
    N, h = grid.N, grid.h
    rows, cols, visc, fixed = [], [], [], []
    lid_unit = np.zeros(grid.n_sad)

    def entry(r, c, v_visc, v_fixed):
        rows.append(r)
        cols.append(c)
        visc.append(v_visc)
        fixed.append(v_fixed)

    for j in range(N):
        for i in range(1, N):
            r = grid.sad_of_u[i, j]
            # reflection ghosts below/above raise the diagonal by one each
            entry(r, r, 4.0 + (j == 0) + (j == N - 1), 0.0)
            for ii, jj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if 1 <= ii <= N - 1 and 0 <= jj <= N - 1:
                    entry(r, grid.sad_of_u[ii, jj], -1.0, 0.0)
            for cell, sign in (((i, j), 1.0), ((i - 1, j), -1.0)):
                c = grid.sad_of_p[cell]
                if c >= 0:
                    entry(r, c, 0.0, sign * h)
                    entry(c, r, 0.0, sign * h)
            if j == N - 1:
                lid_unit[r] = 2.0 * grid.lid_speed
    for j in range(1, N):
        for i in range(N):
            r = grid.sad_of_v[i, j]
            entry(r, r, 4.0 + (i == 0) + (i == N - 1), 0.0)
            for ii, jj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if 0 <= ii <= N - 1 and 1 <= jj <= N - 1:
                    entry(r, grid.sad_of_v[ii, jj], -1.0, 0.0)
            for cell, sign in (((i, j), 1.0), ((i, j - 1), -1.0)):
                c = grid.sad_of_p[cell]
                if c >= 0:
                    entry(r, c, 0.0, sign * h)
                    entry(c, r, 0.0, sign * h)

    grid._stokes_struct = (np.asarray(rows, dtype=np.intp),
                           np.asarray(cols, dtype=np.intp),
                           np.asarray(visc), np.asarray(fixed), lid_unit)
    return grid._stokes_struct


def _convection_structure(grid):
    """COO structure of the linearized convection operator.

    Each entry's value is sign * (h/4) * (a[p] + a[q]) for a convecting
    velocity field a in the velocity layout; p or q is -1 where the
    corresponding convecting value is a boundary zero.  Fluxes across the
    outer walls are omitted entirely (the normal velocity there is zero).
    """
    if grid._conv_struct is not None:
        return grid._conv_struct
    N = grid.N
    rows, cols, sign, p_idx, q_idx = [], [], [], [], []

    def flux(r, s, p, q, transported):
        for t in transported:
            if t >= 0:
                rows.append(r)
                cols.append(grid.sad_of_vel[t])
                sign.append(s)
                p_idx.append(p)
                q_idx.append(q)

    vu, vv = grid.vel_of_u, grid.vel_of_v
    for j in range(N):
        for i in range(1, N):
            r = grid.sad_of_u[i, j]
            flux(r, 1.0, vu[i, j], vu[i + 1, j], (vu[i, j], vu[i + 1, j]))
            flux(r, -1.0, vu[i - 1, j], vu[i, j], (vu[i - 1, j], vu[i, j]))
            if j + 1 <= N - 1:
                flux(r, 1.0, vv[i - 1, j + 1], vv[i, j + 1],
                     (vu[i, j], vu[i, j + 1]))
            if j >= 1:
                flux(r, -1.0, vv[i - 1, j], vv[i, j],
                     (vu[i, j - 1], vu[i, j]))
    for j in range(1, N):
        for i in range(N):
            r = grid.sad_of_v[i, j]
            if i + 1 <= N - 1:
                flux(r, 1.0, vu[i + 1, j - 1], vu[i + 1, j],
                     (vv[i, j], vv[i + 1, j]))
            if i >= 1:
                flux(r, -1.0, vu[i, j - 1], vu[i, j],
                     (vv[i - 1, j], vv[i, j]))
            flux(r, 1.0, vv[i, j], vv[i, j + 1], (vv[i, j], vv[i, j + 1]))
            flux(r, -1.0, vv[i, j - 1], vv[i, j], (vv[i, j - 1], vv[i, j]))

    grid._conv_struct = (np.asarray(rows, dtype=np.intp),
                         np.asarray(cols, dtype=np.intp),
                         np.asarray(sign),
                         np.asarray(p_idx, dtype=np.intp),
                         np.asarray(q_idx, dtype=np.intp))
    return grid._conv_struct


def _convection_values(grid, a):
    rows, cols, sign, p_idx, q_idx = _convection_structure(grid)
    a_ext = np.concatenate([[0.0], np.asarray(a, dtype=np.float64)])
    vals = sign * (grid.h / 4.0) * (a_ext[p_idx + 1] + a_ext[q_idx + 1])
    return rows, cols, vals


def _oseen_coo(grid, nu, a):
    srows, scols, visc, fixed, lid_unit = _stokes_structure(grid)
    crows, ccols, cvals = _convection_values(grid, a)
    rows = np.concatenate([srows, crows])
    cols = np.concatenate([scols, ccols])
    vals = np.concatenate([nu * visc + fixed, cvals])
    return rows, cols, vals, nu * lid_unit


def _band_from_coo(grid, rows, cols, vals):
    diffs = rows - cols
    lower = int(max(diffs.max(), 0))
    upper = int(max(-diffs.min(), 0))
    assert max(lower, upper) <= MAX_BANDWIDTH_FACTOR * grid.N, \
        "saddle ordering lost its banded structure"
    return BandedMatrix.from_coo(grid.n_sad, lower, upper, rows, cols, vals)


def assemble_stokes(grid, nu):
    """Symmetric saddle matrix (viscous block + gradient/divergence), plus
    its banded LU factorization, computed once and shared by every dual-norm
    evaluation.  Raises SingularMatrixError if pinning or the boundary
    handling went wrong.
    """
    srows, scols, visc, fixed, _ = _stokes_structure(grid)
    matrix = _band_from_coo(grid, srows, scols, nu * visc + fixed)
    return matrix, lu_factor(matrix)


def assemble_oseen(grid, nu, a):
    """Stokes plus linearized convection carried by the velocity field a.

    ``a`` should be (numerically) divergence-free for the operator to model
    transport faithfully; the zero field is always acceptable and
    reproduces the Stokes matrix entry for entry.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (grid.n_vel,):
        raise ValueError("convecting field must be in the velocity layout")
    rows, cols, vals, rhs = _oseen_coo(grid, nu, a)
    matrix = _band_from_coo(grid, rows, cols, vals)
    return OseenSystem(matrix=matrix, rhs=rhs, convecting_field=a.copy())


# ---------------------------------------------------------------------------
# fixed-point map and residual


def _divergence_matrix(grid):
    # rows are h^2-scaled cell divergences: u_R - u_L + v_T - v_B
    if grid._div_matrix is not None:
        return grid._div_matrix
    N = grid.N
    rows, cols, vals = [], [], []
    for cj in range(N):
        for ci in range(N):
            cell = cj * N + ci
            for idx, s in ((grid.vel_of_u[ci + 1, cj], 1.0),
                           (grid.vel_of_u[ci, cj], -1.0),
                           (grid.vel_of_v[ci, cj + 1], 1.0),
                           (grid.vel_of_v[ci, cj], -1.0)):
                if idx >= 0:
                    rows.append(cell)
                    cols.append(idx)
                    vals.append(s)
    grid._div_matrix = csr_matrix((vals, (rows, cols)),
                                  shape=(N * N, grid.n_vel))
    return grid._div_matrix


def divergence_values(grid, vel):
    """Per-cell h^2-scaled discrete divergence of a velocity vector."""
    return _divergence_matrix(grid) @ np.asarray(vel, dtype=np.float64)


def nse_q(grid, nu, u):
    """One Picard step: solve the Oseen system convected by u.

    Assembles and factorizes fresh (the convecting field changes every
    call), solves, and returns the velocity block; the discrete divergence
    of the result is asserted to be zero to 1e-10 relative.
    """
    system = assemble_oseen(grid, nu, u)
    try:
        fact = lu_factor(system.matrix)
        solution = fact.solve(system.rhs)
    except SingularMatrixError as exc:
        raise LinearSolveFailureError(
            f"Oseen solve failed: {exc}") from exc
    vel = gather_velocity(grid, solution)
    div = divergence_values(grid, vel)
    scale = max(1.0, float(np.max(np.abs(vel))))
    assert float(np.max(np.abs(div))) <= 1e-10 * scale, \
        "Picard step produced a velocity with nonzero discrete divergence"
    return vel


def nse_g(grid, nu, u):
    """Momentum residual of u in the saddle layout, pressure rows zero.

    Evaluates nu*K u + C(u) u - rhs on the momentum rows (the pressure
    unknowns enter as zero, so the gradient block contributes nothing) and
    masks the continuity rows.
    """
    u = np.asarray(u, dtype=np.float64)
    rows, cols, vals, rhs = _oseen_coo(grid, nu, u)
    x = scatter_velocity(grid, u)
    out = np.zeros(grid.n_sad)
    np.add.at(out, rows, vals * x[cols])
    out -= rhs
    out[~grid.velocity_mask] = 0.0
    return out


def velocity_stiffness(grid):
    """Viscosity-free h^2-scaled stiffness over the velocity layout.

    Same stencil as the momentum diagonal block (reflection ghosts at
    tangential walls), so the quadratic form approximates the squared
    gradient seminorm of the staggered field.
    """
    N = grid.N
    rows, cols, vals = [], [], []

    def entry(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    for j in range(N):
        for i in range(1, N):
            r = grid.vel_of_u[i, j]
            entry(r, r, 4.0 + (j == 0) + (j == N - 1))
            for ii, jj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if 1 <= ii <= N - 1 and 0 <= jj <= N - 1:
                    entry(r, grid.vel_of_u[ii, jj], -1.0)
    for j in range(1, N):
        for i in range(N):
            r = grid.vel_of_v[i, j]
            entry(r, r, 4.0 + (i == 0) + (i == N - 1))
            for ii, jj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if 0 <= ii <= N - 1 and 1 <= jj <= N - 1:
                    entry(r, grid.vel_of_v[ii, jj], -1.0)
    return csr_matrix((vals, (rows, cols)),
                      shape=(grid.n_vel, grid.n_vel))


def convection_skewness(grid, a, u):
    """<C(a) u, u> normalized by ||a|| ||u||^2; a symmetry diagnostic.

    Central divergence-form convection is only approximately
    skew-symmetric on this grid, so this is recorded, never asserted.
    """
    a = np.asarray(a, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    rows, cols, vals = _convection_values(grid, a)
    x = scatter_velocity(grid, u)
    cu = np.zeros(grid.n_sad)
    np.add.at(cu, rows, vals * x[cols])
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(u)) ** 2
    if denom == 0.0:
        return 0.0
    return float(cu @ x) / denom


def cavity_problem(N, Re, lid_speed=1.0):
    """Bundle the cavity flow as a fixed-point problem.

    The iterate is the velocity vector; the map is the Oseen solve, the
    residual the momentum defect.  Residuals are measured in the dual norm
    of the cached Stokes factorization (velocity block), map residuals in
    the velocity stiffness norm.  Every accepted iterate is checked to be
    discretely divergence-free to 1e-9, which is what makes the
    velocity-masked dual form exact for affine combinations of map outputs.
    """
    if not 8 <= N <= 64:
        raise ValueError("N must be in [8, 64] for the cavity problem")
    if not Re > 0:
        raise ValueError("Re must be > 0")
    grid = MacGrid(N, lid_speed)
    nu = 1.0 / float(Re)
    stokes_matrix, stokes_fact = assemble_stokes(grid, nu)
    ip_h1 = InnerProduct.matrix_weighted(velocity_stiffness(grid))
    ip_vprime = InnerProduct.operator_inverse(stokes_fact,
                                              block_mask=grid.velocity_mask)
    norms = {"l2": InnerProduct.euclidean(),
             "h1": ip_h1,
             "vprime": ip_vprime}

    def q_apply(u):
        return nse_q(grid, nu, u)

    def g_apply(u):
        return nse_g(grid, nu, u)

    def iterate_check(u):
        div = divergence_values(grid, u)
        scale = max(1.0, float(np.max(np.abs(u))))
        assert float(np.max(np.abs(div))) <= 1e-9 * scale, \
            "iterate lost discrete divergence-freeness"

    return FixedPointProblem(
        name=f"cavity(N={grid.N}, Re={float(Re):g})",
        dim=grid.n_vel,
        q_apply=q_apply,
        g_apply=g_apply,
        q_norm=ip_h1,
        g_norm=ip_vprime,
        norms=norms,
        initial_guess=np.zeros(grid.n_vel),
        iterate_check=iterate_check,
        nu=nu,
        extras={"grid": grid, "Re": float(Re),
                "stokes_matrix": stokes_matrix,
                "stokes_factorization": stokes_fact,
                "h1_weight": ip_h1.weight,
                "skewness": convection_skewness})
