"""A small problem whose residual is exactly quadratic.

g(u) = A u + B(u, u) - f with A SPD and B a fixed sparse symmetric bilinear
map, scaled well below A so the damped iteration q(u) = u - g(u)/lambda_max
contracts near the planted root.  Because g has no cubic or higher terms,
expansion identities that drop only bilinear cross terms hold here to
round-off, which is what the identity tests exploit.  The bilinear map is
exposed through extras["bilinear"] for exactly that purpose.
"""

from __future__ import annotations

import numpy as np

from ..norms import InnerProduct

__all__ = ["quadratic_toy"]


def _sparse_symmetric_tensor(n, rng, nnz):
    """Entries T[i, j, l] = T[i, l, j] at ~nnz random positions."""
    tensor = np.zeros((n, n, n))
    idx_i = rng.integers(0, n, size=nnz)
    idx_j = rng.integers(0, n, size=nnz)
    idx_l = rng.integers(0, n, size=nnz)
    vals = rng.uniform(-1.0, 1.0, size=nnz)
    # add both orderings so symmetry in the last two slots is exact
    np.add.at(tensor, (idx_i, idx_j, idx_l), vals)
    np.add.at(tensor, (idx_i, idx_l, idx_j), vals)
    return tensor


def quadratic_toy(n, seed=0):
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)

    off = rng.uniform(-1.0, 1.0, size=(n, n))
    sym = (off + off.T) / 2.0
    np.fill_diagonal(sym, 0.0)
    a_mat = sym + np.diag(np.abs(sym).sum(axis=1) + 1.0
                          + rng.uniform(0.0, 1.0, size=n))
    eigs = np.linalg.eigvalsh(a_mat)
    lam_min, lam_max = float(eigs[0]), float(eigs[-1])

    tensor = _sparse_symmetric_tensor(n, rng, nnz=3 * n)
    fro = float(np.sqrt((tensor ** 2).sum()))
    if fro > 0:
        # ||B(x,y)|| <= ||T||_F ||x|| ||y||, so this caps the operator norm
        tensor *= 0.1 * lam_min / fro

    def bilinear(x, y):
        return tensor @ np.asarray(y, dtype=np.float64) \
            @ np.asarray(x, dtype=np.float64)

    root = 0.3 * rng.standard_normal(n)
    f_vec = a_mat @ root + bilinear(root, root)
    omega = 1.0 / lam_max

    def g_apply(u):
        return a_mat @ u + bilinear(u, u) - f_vec

    def q_apply(u):
        return u - omega * g_apply(u)

    eu = InnerProduct.euclidean(n)
    from . import FixedPointProblem
    return FixedPointProblem(
        name="toy", dim=n, q_apply=q_apply, g_apply=g_apply,
        q_norm=eu, g_norm=eu, norms={"l2": eu, "h1": eu, "vprime": eu},
        initial_guess=np.zeros(n),
        extras={"bilinear": bilinear, "a": a_mat, "root": root,
                "f": f_vec, "omega": omega, "tensor": tensor})
