"""Shared oracles for the identity tests.

A window holds m+1 candidate points u_0..u_m (local indices, oldest first),
an affine coefficient vector alpha over them (sum 1), and the combination
u = sum_j alpha_j u_j.  Differences of consecutive candidates are
e_l = u_l - u_{l-1} for l = 1..m.
"""

import numpy as np


def expansion_rhs(us, alpha, target):
    """u - us[target] written in the difference basis.

    The coefficient of e_l is sum(alpha[l:]) for l > target and
    -sum(alpha[:l]) for l <= target; both follow from telescoping
    u - u_target across consecutive candidates.
    """
    m = len(alpha) - 1
    rhs = np.zeros_like(us[0])
    for l in range(1, m + 1):
        e_l = us[l] - us[l - 1]
        if l > target:
            c = float(alpha[l:].sum())
        else:
            c = -float(alpha[:l].sum())
        rhs += c * e_l
    return rhs


def random_window(rng, m, dim):
    """Random candidates plus an affine coefficient vector (sum exactly 1)."""
    us = [rng.standard_normal(dim) for _ in range(m + 1)]
    alpha = rng.standard_normal(m + 1)
    alpha[-1] += 1.0 - alpha.sum()
    return us, alpha


def combination(us, alpha):
    out = np.zeros_like(us[0])
    for a_j, u_j in zip(alpha, us):
        out += a_j * u_j
    return out
