"""Damped Richardson iteration for a linear system."""

from __future__ import annotations

import numpy as np

from ..norms import InnerProduct
from ..validation import as_vector

__all__ = ["richardson_problem"]


def richardson_problem(a, b, omega, initial_guess=None):
    """q(u) = u + omega (b - A u), g(u) = b - A u; every norm is l2.

    ``a`` is anything supporting @ on vectors (dense array, sparse matrix,
    or a BandedMatrix via its matvec-compatible wrapper).
    """
    if omega == 0:
        raise ValueError("omega must be nonzero")
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    if hasattr(a, "matvec"):
        apply_a = a.matvec
    else:
        a = np.asarray(a, dtype=np.float64)
        apply_a = lambda u: a @ u  # noqa: E731

    def g_apply(u):
        return b - apply_a(u)

    def q_apply(u):
        return u + omega * g_apply(u)

    eu = InnerProduct.euclidean(n)
    norms = {"l2": eu, "h1": eu, "vprime": eu}
    u0 = np.zeros(n) if initial_guess is None \
        else as_vector(initial_guess, n, "initial_guess").copy()
    from . import FixedPointProblem
    return FixedPointProblem(
        name="richardson", dim=n, q_apply=q_apply, g_apply=g_apply,
        q_norm=eu, g_norm=eu, norms=norms, initial_guess=u0,
        extras={"omega": float(omega), "apply_a": apply_a, "rhs": b})
