"""Concrete fixed-point problems and problem-level diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..exceptions import InsufficientDataError

__all__ = ["FixedPointProblem", "kappa_estimate", "richardson_problem",
           "quadratic_toy", "cavity_problem"]


@dataclass
class FixedPointProblem:
    """A fixed-point map q and a residual g sharing their root.

    ``norms`` maps the configuration names l2/h1/vprime to the inner
    products this problem offers for the window minimization; ``q_norm``
    measures map residuals q(u) - u, ``g_norm`` is the monitored residual
    norm used by the stopping rule.  ``iterate_check``, when present, is
    called on every accepted iterate (structural invariants such as the
    discrete divergence).  ``extras`` carries problem-specific handles for
    tests and diagnostics.
    """

    name: str
    dim: int
    q_apply: Callable
    g_apply: Callable
    q_norm: object
    g_norm: object
    norms: dict
    initial_guess: np.ndarray
    iterate_check: Optional[Callable] = None
    nu: Optional[float] = None
    extras: dict = field(default_factory=dict)


def kappa_estimate(trace):
    """Contraction-rate estimate from a plain fixed-point run.

    Geometric mean of successive map-residual ratios over the last half of
    the usable trace (the final row carries no map residual).  Requires at
    least 5 recorded iterations.
    """
    if trace.iterations < 5:
        raise InsufficientDataError(
            f"need at least 5 iterations, trace has {trace.iterations}")
    resid = trace.column("picard_resid_h1")
    vals = []
    for r in resid:
        if not (np.isfinite(r) and r > 0):
            break
        vals.append(float(r))
    if len(vals) < 3:
        raise InsufficientDataError("too few positive map residuals")
    ratios = np.array(vals[1:]) / np.array(vals[:-1])
    tail = ratios[len(ratios) // 2:]
    return float(np.exp(np.mean(np.log(tail))))


from .linear import richardson_problem            # noqa: E402
from .quadratic import quadratic_toy              # noqa: E402


def cavity_problem(N, Re, lid_speed=1.0):
    from .cavity import cavity_problem as _build
    return _build(N, Re, lid_speed=lid_speed)
