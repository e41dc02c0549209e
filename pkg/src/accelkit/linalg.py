"""Dense/banded LU, GMRES, and regularized SPD solves.

Design notes
------------
* Dense matrices are plain float64 ndarrays; `BandedMatrix` packs a band in
  the classic ``ab[upper + i - j, j] = A[i, j]`` layout so LAPACK's general
  band factorization can consume it without reshuffling.
* Factorizations delegate to LAPACK (dgetrf/dgbtrf) and are immutable, so a
  single Stokes factorization can be shared by every dual-norm evaluation.
* GMRES is unrestarted modified Gram-Schmidt with a single conditional
  reorthogonalization pass; it reports the *true* residual 2-norm of the
  reconstructed iterate at every Arnoldi step, which is what makes it usable
  as an equivalence oracle rather than just a solver.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack, solve_triangular
from scipy.sparse import csr_matrix

from .exceptions import (
    BreakdownError,
    DimensionMismatchError,
    IndefiniteAfterRegularizationError,
    SingularMatrixError,
)
from .validation import as_square_dense, as_vector, check_symmetric

__all__ = [
    "BandedMatrix",
    "Factorization",
    "lu_factor",
    "lu_solve",
    "gmres",
    "solve_spd_regularized",
]

# Relative pivot threshold below which a factorization is declared singular.
PIVOT_RTOL = 1e-14


class BandedMatrix:
    """Square banded matrix in packed storage.

    Parameters
    ----------
    n : int
        Matrix dimension.
    lower, upper : int
        Number of sub/superdiagonals.
    data : ndarray, shape (lower + upper + 1, n)
        ``data[upper + i - j, j]`` holds entry (i, j). Positions outside the
        matrix are ignored and should be zero.
    """

    def __init__(self, n, lower, upper, data):
        data = np.asarray(data, dtype=np.float64)
        if n < 1 or lower < 0 or upper < 0:
            raise ValueError("n must be >= 1 and bandwidths >= 0")
        if lower >= n or upper >= n:
            raise ValueError("bandwidths must be < n")
        if data.shape != (lower + upper + 1, n):
            raise DimensionMismatchError(
                f"band data shape {data.shape}, expected {(lower + upper + 1, n)}"
            )
        self.n = n
        self.lower = lower
        self.upper = upper
        self.data = data
        self._csr = None

    @classmethod
    def from_coo(cls, n, lower, upper, rows, cols, vals):
        """Accumulate COO triplets into packed band storage.

        Duplicate (row, col) pairs are summed. Raises ValueError if any entry
        falls outside the declared band.
        """
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise DimensionMismatchError("rows/cols/vals must have equal length")
        diag = rows - cols
        if diag.size and (diag.max(initial=0) > lower or -diag.min(initial=0) > upper):
            raise ValueError("entry outside declared band")
        data = np.zeros((lower + upper + 1, n))
        np.add.at(data, (upper + diag, cols), vals)
        return cls(n, lower, upper, data)

    def to_dense(self):
        out = np.zeros((self.n, self.n))
        for d in range(-self.upper, self.lower + 1):
            lo = max(0, -d)
            hi = min(self.n, self.n - d)
            cols = np.arange(lo, hi)
            out[cols + d, cols] = self.data[self.upper + d, cols]
        return out

    def tocsr(self):
        if self._csr is None:
            rows, cols, vals = [], [], []
            for d in range(-self.upper, self.lower + 1):
                lo = max(0, -d)
                hi = min(self.n, self.n - d)
                c = np.arange(lo, hi)
                rows.append(c + d)
                cols.append(c)
                vals.append(self.data[self.upper + d, c])
            self._csr = csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(self.n, self.n),
            )
        return self._csr

    def matvec(self, x):
        x = as_vector(x, self.n, "x")
        return self.tocsr() @ x


class Factorization:
    """Immutable LU factorization handle, kind 'dense-lu' or 'banded-lu'."""

    def __init__(self, kind, n, internals):
        self.kind = kind
        self.n = n
        self._internals = internals

    def solve(self, rhs):
        return lu_solve(self, rhs)


def _check_pivots(pivots, scale, kind):
    if scale == 0.0:
        raise SingularMatrixError(f"{kind}: matrix is identically zero")
    small = np.abs(pivots) < PIVOT_RTOL * scale
    if np.any(small):
        j = int(np.argmax(small))
        raise SingularMatrixError(
            f"{kind}: pivot {j} has magnitude {abs(pivots[j]):.3e} "
            f"< {PIVOT_RTOL:.0e} * max|entry| = {PIVOT_RTOL * scale:.3e}"
        )


def lu_factor(a):
    """LU-factorize a dense ndarray or a BandedMatrix with partial pivoting.

    Raises SingularMatrixError when any pivot magnitude falls below
    1e-14 * max|entry| of the input.
    """
    if isinstance(a, BandedMatrix):
        kl, ku, n = a.lower, a.upper, a.n
        scale = float(np.max(np.abs(a.data)))
        # dgbtrf wants kl extra fill rows on top of the packed band
        ab = np.zeros((2 * kl + ku + 1, n), order="F")
        ab[kl:, :] = a.data
        lub, ipiv, info = lapack.dgbtrf(ab, kl, ku)
        if info < 0:
            raise ValueError(f"dgbtrf: illegal argument {-info}")
        pivots = lub[kl + ku, :] if info == 0 else np.zeros(n)
        _check_pivots(pivots, scale, "banded-lu")
        return Factorization("banded-lu", n, (lub, ipiv, kl, ku))

    mat = as_square_dense(a, "matrix")
    scale = float(np.max(np.abs(mat))) if mat.size else 0.0
    lu, piv, info = lapack.dgetrf(mat)
    if info < 0:
        raise ValueError(f"dgetrf: illegal argument {-info}")
    pivots = np.diag(lu) if info == 0 else np.zeros(mat.shape[0])
    _check_pivots(pivots, scale, "dense-lu")
    return Factorization("dense-lu", mat.shape[0], (lu, piv))


def lu_solve(fact, rhs):
    """Solve fact @ x = rhs for a single right-hand side."""
    if not isinstance(fact, Factorization):
        raise TypeError("fact must be a Factorization from lu_factor")
    b = as_vector(rhs, fact.n, "rhs")
    if fact.kind == "dense-lu":
        lu, piv = fact._internals
        x, info = lapack.dgetrs(lu, piv, b)
    else:
        lub, ipiv, kl, ku = fact._internals
        x, info = lapack.dgbtrs(lub, kl, ku, b, ipiv)
    if info != 0:
        raise SingularMatrixError(f"{fact.kind}: back-substitution failed (info={info})")
    return x


def _as_operator(a):
    if callable(a):
        return a
    if isinstance(a, BandedMatrix):
        return a.matvec
    mat = np.asarray(a, dtype=np.float64)
    return lambda v: mat @ v


def gmres(apply_a, rhs, x0=None, rel_tol=1e-10, max_it=None):
    """Unrestarted GMRES with true per-step residual norms.

    Parameters
    ----------
    apply_a : callable, ndarray, or BandedMatrix
        The linear operator.
    rhs : array_like
    x0 : array_like, optional
        Initial guess (zeros by default).
    rel_tol : float
        Stop once ||rhs - A x|| <= rel_tol * ||rhs - A x0||.
    max_it : int, optional
        Maximum Arnoldi steps (defaults to the problem dimension).

    Returns
    -------
    x : ndarray
    residual_norms : list of float
        residual_norms[0] is the initial residual; one entry is appended per
        Arnoldi step, each the 2-norm of rhs - A x_j for the reconstructed
        iterate x_j (not the Givens estimate).

    Raises
    ------
    BreakdownError
        If the new Arnoldi vector underflows while the residual is still
        above tolerance. A happy breakdown (residual converged in the same
        step) returns the exact solution instead.
    """
    b = as_vector(rhs, name="rhs")
    n = b.shape[0]
    op = _as_operator(apply_a)
    x0 = np.zeros(n) if x0 is None else as_vector(x0, n, "x0")
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    max_it = n if max_it is None else int(max_it)

    r0 = b - op(x0)
    beta = float(np.linalg.norm(r0))
    residual_norms = [beta]
    if beta == 0.0:
        return x0.copy(), residual_norms
    target = rel_tol * beta

    v_basis = np.zeros((n, max_it + 1))
    v_basis[:, 0] = r0 / beta
    hess = np.zeros((max_it + 1, max_it))
    e1 = np.zeros(max_it + 1)
    e1[0] = beta
    x = x0.copy()

    for j in range(max_it):
        w = op(v_basis[:, j])
        w_scale = float(np.linalg.norm(w))
        # modified Gram-Schmidt
        for i in range(j + 1):
            hij = float(v_basis[:, i] @ w)
            hess[i, j] += hij
            w -= hij * v_basis[:, i]
        # one reorthogonalization pass when orthogonality has visibly decayed
        drift = v_basis[:, : j + 1].T @ w
        if drift.size and np.max(np.abs(drift)) > 1e-8 * max(w_scale, 1e-300):
            hess[: j + 1, j] += drift
            w -= v_basis[:, : j + 1] @ drift
        h_next = float(np.linalg.norm(w))
        hess[j + 1, j] = h_next

        y, *_ = np.linalg.lstsq(hess[: j + 2, : j + 1], e1[: j + 2], rcond=None)
        x = x0 + v_basis[:, : j + 1] @ y
        true_res = float(np.linalg.norm(b - op(x)))
        residual_norms.append(true_res)

        if true_res <= target:
            return x, residual_norms
        if h_next <= 1e-14 * max(w_scale, 1e-300):
            # Krylov space became invariant; exact solve or genuine breakdown
            if true_res <= max(target, 1e-12 * beta):
                return x, residual_norms
            raise BreakdownError(j)
        v_basis[:, j + 1] = w / h_next

    return x, residual_norms


def solve_spd_regularized(g_mat, b, ridge=0.0):
    """Solve (G + ridge * tr(G)/m * I) x = b by pivoted Cholesky.

    If the factorization fails (matrix not numerically positive definite),
    the ridge is escalated by x10 up to 3 times before raising
    IndefiniteAfterRegularizationError. A zero or negative trace falls back
    to an absolute ridge scale of 1.
    """
    g = as_square_dense(g_mat, "G")
    m = g.shape[0]
    rhs = as_vector(b, m, "b")
    check_symmetric(g, 1e-10, "G")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")

    tr = float(np.trace(g))
    scale = tr / m if tr > 0 else 1.0
    lam = float(ridge)
    for _attempt in range(4):
        g_reg = g if lam == 0.0 else g + (lam * scale) * np.eye(m)
        c, piv, rank, info = lapack.dpstrf(g_reg, lower=1)
        if info >= 0 and rank == m:
            perm = piv.astype(np.intp) - 1  # LAPACK returns 1-based pivots
            lower_tri = np.tril(c)
            z = solve_triangular(lower_tri, rhs[perm], lower=True)
            xp = solve_triangular(lower_tri.T, z, lower=False)
            x = np.empty(m)
            x[perm] = xp
            if np.all(np.isfinite(x)):
                return x
        lam = lam * 10.0 if lam > 0 else 0.0
        if lam == 0.0:
            # ridge 0 cannot escalate; retries would repeat the same matrix
            break
    raise IndefiniteAfterRegularizationError(
        f"Cholesky failed after ridge escalation (final ridge {lam:.2e})"
    )
