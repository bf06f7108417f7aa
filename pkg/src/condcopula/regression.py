"""Kernel regression of FPCA scores on the covariate.

The regression of each score column on x uses the same NW weights as the
conditional CDF machinery, but with its own kernel and bandwidth; a
leave-one-out cross-validation selector for that bandwidth is provided.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditional import KernelSpec, kernel_values, nw_weights
from .fpca import ScoreMatrix

__all__ = ["ScoreRegressor", "eval_alpha", "cv_bandwidth"]


@dataclass(frozen=True)
class ScoreRegressor:
    """Covariate values, score matrix and the x-regression kernel."""

    xs: np.ndarray
    scores: ScoreMatrix
    kernel: KernelSpec

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim != 1 or xs.size != self.scores.n:
            raise ValueError("xs length must match the score matrix rows")
        xs.setflags(write=False)
        object.__setattr__(self, "xs", xs)


def eval_alpha(r: ScoreRegressor, x: float) -> np.ndarray:
    """NW regression estimate of each score's conditional mean at x.

    Returns a length-K array; each entry is a convex combination of the
    corresponding score column.
    """
    w = nw_weights(x, r.xs, r.kernel).require_valid(f"at x={x:g}")
    return w @ r.scores.xi


def cv_bandwidth(
    xs: np.ndarray,
    scores: ScoreMatrix,
    kernel_family: str = "epanechnikov",
    candidates=None,
) -> float:
    """Leave-one-out CV bandwidth for the score regression.

    Minimizes the squared leave-one-out prediction error summed over score
    columns and observations; candidates whose window isolates some
    observation get infinite error. Ties resolve to the smaller bandwidth.
    """
    xs = np.asarray(xs, dtype=float)
    if np.unique(xs).size < 3:
        raise ValueError("cross-validation needs at least 3 distinct covariate values")
    if candidates is None or len(candidates) == 0:
        raise ValueError("empty candidate grid")
    candidates = sorted(float(h) for h in candidates)
    xi = scores.xi
    best_h, best_err = None, np.inf
    for h in candidates:
        kv = kernel_values(kernel_family, (xs[:, None] - xs[None, :]) / h)
        np.fill_diagonal(kv, 0.0)
        totals = kv.sum(axis=1)
        if np.any(totals <= 0.0):
            err = np.inf
        else:
            pred = (kv / totals[:, None]) @ xi
            err = float(np.sum((xi - pred) ** 2))
        if err < best_err - 1e-15:
            best_err, best_h = err, h
    if best_h is None:
        # every candidate isolates some point; fall back to the smallest
        best_h = candidates[0]
    return best_h
