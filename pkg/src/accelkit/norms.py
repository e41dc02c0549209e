"""Inner products for residual minimization.

Three kinds are supported through one front-end:

* ``euclidean``        dot(x, y) = x @ y
* ``matrix``           dot(x, y) = x @ (W @ y) for a symmetric PSD weight W
* ``operator_inverse`` dot(x, y) = x @ solve(F, y) for a factorized symmetric
  operator F, optionally restricted to a coordinate block

The operator-inverse kind is the expensive one: every fresh vector costs a
back-substitution (its Riesz representer).  Callers that evaluate many dots
against the same vectors pass a ``cache`` dict so each representer is computed
once.  Cache keys are ``id(vec)`` and the value pins the vector object itself,
so a recycled id cannot alias a dead array.

``gram`` assembles the normal-equations data for a least-squares problem
``min ||base + sum_i c_i * diffs[i]||`` in the chosen inner product.  With a
cold cache this costs ``len(diffs) + 1`` representer solves; when only ``base``
is new it costs exactly one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NotAdmissibleError
from .linalg import Factorization
from .validation import as_vector, check_symmetric

__all__ = ["InnerProduct", "GramSystem", "gram"]

# Entries outside the admissible block may be nonzero only up to this factor
# times the vector's own max magnitude (with an absolute floor of the same
# size, so exact-zero vectors always pass).
_MASK_RTOL = 1e-12


class InnerProduct:
    """A bilinear form <x, y> with pluggable metric.

    Construct through the classmethods ``euclidean``, ``matrix_weighted``, or
    ``operator_inverse``; the bare constructor is internal.

    Attributes
    ----------
    kind : str
        One of ``"euclidean"``, ``"matrix"``, ``"operator_inverse"``.
    solve_count : int
        Number of representer solves performed so far (operator-inverse kind
        only; stays 0 for the others).  Cache hits do not count.
    """

    def __init__(self, kind, *, dim=None, weight=None, fact=None,
                 block_mask=None):
        self.kind = kind
        self.dim = dim
        self.weight = weight
        self.fact = fact
        self.block_mask = block_mask
        self.solve_count = 0

    @classmethod
    def euclidean(cls, dim=None):
        """Plain dot product; ``dim`` is optional length validation."""
        return cls("euclidean", dim=None if dim is None else int(dim))

    @classmethod
    def matrix_weighted(cls, weight):
        """<x, y> = x @ W @ y for symmetric ``weight`` (dense or CSR).

        Positive semidefiniteness is the caller's responsibility; ``norm``
        clamps small negative round-off.
        """
        if hasattr(weight, "toarray") and not isinstance(weight, np.ndarray):
            # scipy sparse: symmetry check on the difference pattern
            gap = abs(weight - weight.T)
            top = abs(weight).max()
            if gap.nnz and gap.max() > 1e-10 * max(top, 1.0):
                raise ValueError("weight matrix is not symmetric")
            dim = weight.shape[0]
        else:
            weight = np.asarray(weight, dtype=np.float64)
            check_symmetric(weight, name="weight")
            dim = weight.shape[0]
        return cls("matrix", dim=dim, weight=weight)

    @classmethod
    def operator_inverse(cls, fact, block_mask=None):
        """<x, y> = x @ solve(F, y) for a prefactorized symmetric F.

        ``block_mask`` restricts admissible vectors to a coordinate block:
        entries where the mask is False must be (numerically) zero or the dot
        raises ``NotAdmissibleError``.  Pass a boolean array of length n or an
        integer index array of admissible coordinates.
        """
        if not isinstance(fact, Factorization):
            raise TypeError("fact must be a Factorization")
        mask = None
        if block_mask is not None:
            block_mask = np.asarray(block_mask)
            if block_mask.dtype == bool:
                if block_mask.shape != (fact.n,):
                    raise ValueError("boolean block_mask must have length n")
                mask = block_mask.copy()
            else:
                mask = np.zeros(fact.n, dtype=bool)
                mask[block_mask] = True
        return cls("operator_inverse", dim=fact.n, fact=fact, block_mask=mask)

    # -- admissibility ----------------------------------------------------

    def _check_admissible(self, x, name):
        if self.block_mask is None:
            return
        off = x[~self.block_mask]
        if off.size == 0:
            return
        bound = _MASK_RTOL * max(float(np.max(np.abs(x))), 1.0)
        worst = float(np.max(np.abs(off)))
        if worst > bound:
            raise NotAdmissibleError(
                f"{name} has magnitude {worst:.3e} outside the admissible "
                f"block (tolerance {bound:.3e})")

    # -- representers ------------------------------------------------------

    def image(self, y, cache=None):
        """Return the metric image of ``y``: y, W @ y, or solve(F, y).

        With a ``cache`` dict the image of each distinct vector object is
        computed once.  The operator-inverse image is the Riesz representer;
        computing it is the only place ``solve_count`` advances.
        """
        y = as_vector(y, self.dim, name="y")
        if self.kind == "euclidean":
            return y
        if cache is not None:
            hit = cache.get(id(y))
            if hit is not None and hit[0] is y:
                return hit[1]
        if self.kind == "matrix":
            img = np.asarray(self.weight @ y, dtype=np.float64)
        else:
            self._check_admissible(y, "y")
            img = self.fact.solve(y)
            self.solve_count += 1
        if cache is not None:
            cache[id(y)] = (y, img)
        return img

    def representer(self, y, cache=None):
        """Alias of ``image`` under its operator-inverse name."""
        return self.image(y, cache=cache)

    # -- dots and norms ----------------------------------------------------

    def dot(self, x, y, cache=None):
        x = as_vector(x, self.dim, name="x")
        if self.kind == "operator_inverse":
            self._check_admissible(x, "x")
        img = self.image(y, cache=cache)
        if x.shape != img.shape:
            raise ValueError(
                f"length mismatch: x has {x.shape[0]}, y has {img.shape[0]}")
        return float(x @ img)

    def norm(self, x, cache=None):
        # clamp: operator-inverse dots can go an ulp negative at round-off
        return float(np.sqrt(max(self.dot(x, x, cache=cache), 0.0)))


@dataclass
class GramSystem:
    """Normal-equations data for min ||base + sum_i c_i d_i||.

    ``g[i, j] = <d_i, d_j>``, ``b[i] = <d_i, base>``, ``base_sq = <base, base>``.
    ``g`` is symmetrized explicitly so downstream Cholesky sees an exactly
    symmetric matrix.
    """

    g: np.ndarray
    b: np.ndarray
    base_sq: float


def gram(ip, base, diffs, cache=None):
    """Assemble the :class:`GramSystem` for ``base`` and a list of ``diffs``.

    Solve-count contract (operator-inverse kind): ``len(diffs) + 1``
    representer solves on a cold cache, exactly one when the same diff
    objects were seen before and only ``base`` is new.
    """
    base = as_vector(base, ip.dim, name="base")
    m = len(diffs)
    if cache is None:
        cache = {}  # memoize within this call even when the caller keeps none
    base_img = ip.image(base, cache=cache)
    base_sq = float(base @ base_img)
    g_mat = np.empty((m, m), dtype=np.float64)
    b_vec = np.empty(m, dtype=np.float64)
    images = [ip.image(d, cache=cache) for d in diffs]
    for i, d in enumerate(diffs):
        d = as_vector(d, ip.dim, name=f"diffs[{i}]")
        b_vec[i] = float(d @ base_img)
        for j in range(i, m):
            g_mat[i, j] = float(d @ images[j])
    # mirror the upper triangle; exact symmetry keeps Cholesky honest
    i_low = np.tril_indices(m, -1)
    g_mat[i_low] = g_mat.T[i_low]
    return GramSystem(g=g_mat, b=b_vec, base_sq=max(base_sq, 0.0))
