"""Kernel-weighted conditional distribution machinery.

Nadaraya-Watson weights, conditional CDF/quantile estimators, conditional
probability transforms of the raw sample (pseudo-observations), empirical
partial copulas, and the transformed plug-in conditional copula estimator
that serves both as baseline and as trajectory source for the FPCA stage.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightsError
from .grid import Grid2D, GridFunction

__all__ = [
    "Sample",
    "KernelSpec",
    "WeightVector",
    "PseudoSample",
    "nw_weights",
    "cond_cdf",
    "cond_quantile",
    "pseudo_observations",
    "empirical_copula",
    "empirical_copula_grid",
    "partial_copula_known_margins",
    "weighted_copula_trajectory",
    "weighted_copula_surfaces",
    "rule_of_thumb_bandwidth",
    "read_sample_csv",
    "write_sample_csv",
]

_KERNEL_FAMILIES = ("epanechnikov", "gaussian", "uniform")


@dataclass(frozen=True)
class Sample:
    """Observed triples (y1, y2, x), one record per index."""

    y1: np.ndarray
    y2: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=float)
        y2 = np.asarray(self.y2, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if not (y1.shape == y2.shape == x.shape) or y1.ndim != 1:
            raise ValueError("y1, y2, x must be 1-d arrays of equal length")
        for name, arr in (("y1", y1), ("y2", y2), ("x", x)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite value in {name}")
        for arr in (y1, y2, x):
            arr.setflags(write=False)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y1.size

    def margin(self, j: int) -> np.ndarray:
        if j == 1:
            return self.y1
        if j == 2:
            return self.y2
        raise ValueError(f"margin index must be 1 or 2, got {j}")

    def warn_on_ties(self) -> None:
        """Ties within a margin are broken by sample order; flag them."""
        for j in (1, 2):
            vals = self.margin(j)
            if np.unique(vals).size < vals.size:
                warnings.warn(
                    f"ties in margin {j}; broken by original sample order",
                    stacklevel=2,
                )


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus bandwidth (in covariate units)."""

    family: str = "epanechnikov"
    bandwidth: float = 1.0

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in _KERNEL_FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; "
                f"choose one of {_KERNEL_FAMILIES}"
            )
        object.__setattr__(self, "family", fam)
        if not (self.bandwidth > 0):
            raise ValueError("bandwidth must be positive")


def kernel_values(family: str, z: np.ndarray) -> np.ndarray:
    """Evaluate the (unnormalized-scale-free) kernel at standardized z."""
    z = np.asarray(z, dtype=float)
    if family == "epanechnikov":
        return np.where(np.abs(z) <= 1.0, 0.75 * (1.0 - z * z), 0.0)
    if family == "gaussian":
        return np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    if family == "uniform":
        return np.where(np.abs(z) <= 1.0, 0.5, 0.0)
    raise ValueError(f"unknown kernel family {family!r}")


@dataclass(frozen=True)
class WeightVector:
    """Normalized nonnegative weights; ``degenerate`` if all kernel mass is 0."""

    w: np.ndarray
    degenerate: bool

    def require_valid(self, context: str = "") -> np.ndarray:
        if self.degenerate:
            msg = "degenerate weights (all kernel values are zero)"
            if context:
                msg += f" {context}"
            raise DegenerateWeightsError(msg + "; enlarge the bandwidth")
        return self.w


def nw_weights(x: float, xs: np.ndarray, k: KernelSpec) -> WeightVector:
    """Nadaraya-Watson weights w_i = K((x - X_i)/h) / sum_j K((x - X_j)/h)."""
    xs = np.asarray(xs, dtype=float)
    if xs.size < 1:
        raise ValueError("need at least one covariate value")
    kv = kernel_values(k.family, (x - xs) / k.bandwidth)
    total = kv.sum()
    if total <= 0.0:
        return WeightVector(w=np.zeros_like(kv), degenerate=True)
    return WeightVector(w=kv / total, degenerate=False)


def _weighted_ecdf(y: float, values: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum(w * (values <= y)))


def cond_cdf(y: float, j: int, w: WeightVector, s: Sample) -> float:
    """Weighted conditional marginal CDF at y for margin j."""
    weights = w.require_valid("in cond_cdf")
    return _weighted_ecdf(y, s.margin(j), weights)


def cond_quantile(u: float, j: int, w: WeightVector, s: Sample) -> float:
    """Generalized inverse inf{y : F(y) >= u} of the weighted marginal CDF."""
    weights = w.require_valid("in cond_quantile")
    if not (0.0 < u <= 1.0):
        raise ValueError("quantile level must be in (0, 1]")
    values = s.margin(j)
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    # rounding slack so u == attained mass exactly still selects that atom
    idx = int(np.searchsorted(cum, u - 1e-12, side="left"))
    idx = min(idx, values.size - 1)
    return float(values[order][idx])


def _weight_matrix(xs: np.ndarray, k: KernelSpec, leave_one_out: bool) -> np.ndarray:
    """Row i holds the NW weights w_l(X_i); raises naming the first bad row."""
    z = (xs[:, None] - xs[None, :]) / k.bandwidth
    kv = kernel_values(k.family, z)
    if leave_one_out:
        np.fill_diagonal(kv, 0.0)
    totals = kv.sum(axis=1)
    bad = np.nonzero(totals <= 0.0)[0]
    if bad.size:
        raise DegenerateWeightsError(
            f"degenerate weights at observation index {int(bad[0])} "
            f"(x={xs[bad[0]]:g}); enlarge the bandwidth"
        )
    return kv / totals[:, None]


@dataclass(frozen=True)
class PseudoSample:
    """Conditional probability transforms (eps1_i, eps2_i) of the sample."""

    eps1: np.ndarray
    eps2: np.ndarray
    provenance: str = "estimated-margins"

    def __post_init__(self):
        e1 = np.asarray(self.eps1, dtype=float)
        e2 = np.asarray(self.eps2, dtype=float)
        if e1.shape != e2.shape or e1.ndim != 1:
            raise ValueError("eps1, eps2 must be 1-d arrays of equal length")
        if np.any(e1 < 0) or np.any(e1 > 1) or np.any(e2 < 0) or np.any(e2 > 1):
            raise ValueError("pseudo-observations must lie in [0, 1]")
        if self.provenance not in ("estimated-margins", "known-margins"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        e1.setflags(write=False)
        e2.setflags(write=False)
        object.__setattr__(self, "eps1", e1)
        object.__setattr__(self, "eps2", e2)

    @property
    def n(self) -> int:
        return self.eps1.size


def pseudo_observations(
    s: Sample,
    k1: KernelSpec,
    k2: KernelSpec,
    leave_one_out: bool = False,
) -> PseudoSample:
    """Estimated conditional probability transforms of each observation.

    Entry i of margin j is the weighted ECDF of Y_j, with NW weights centered
    at X_i and bandwidth g_j, evaluated at Y_ji. By default observation i is
    included in its own ECDF; ``leave_one_out`` drops it (bias studies).
    """
    if s.n < 2:
        raise ValueError("pseudo-observations need at least 2 records")
    W1 = _weight_matrix(s.x, k1, leave_one_out)
    W2 = _weight_matrix(s.x, k2, leave_one_out)
    ind1 = s.y1[None, :] <= s.y1[:, None]
    ind2 = s.y2[None, :] <= s.y2[:, None]
    eps1 = np.einsum("il,il->i", W1, ind1.astype(float))
    eps2 = np.einsum("il,il->i", W2, ind2.astype(float))
    return PseudoSample(
        eps1=np.clip(eps1, 0.0, 1.0),
        eps2=np.clip(eps2, 0.0, 1.0),
        provenance="estimated-margins",
    )


def _rank_1based(values: np.ndarray) -> np.ndarray:
    """Stable 1-based ranks; ties broken by original order."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.int64)
    ranks[order] = np.arange(1, values.size + 1)
    return ranks


def _level_to_rank(u: float, n: int) -> int:
    """Rank threshold so eps_i <= Finv(u) iff rank_i <= threshold."""
    if u <= 0.0:
        return 0
    return min(int(np.ceil(u * n - 1e-12)), n)


def empirical_copula(p: PseudoSample, u: float, v: float) -> float:
    """Rank-based empirical copula of the pseudo-sample at (u, v).

    Composes the joint ECDF of the pseudo-pairs with the generalized inverses
    of their marginal ECDFs; for tie-free pseudo-samples this reduces to
    counting pairs whose marginal ranks are both below the level thresholds.
    """
    n = p.n
    r1 = _rank_1based(p.eps1)
    r2 = _rank_1based(p.eps2)
    t1 = _level_to_rank(u, n)
    t2 = _level_to_rank(v, n)
    return float(np.mean((r1 <= t1) & (r2 <= t2)))


def empirical_copula_grid(p: PseudoSample, grid: Grid2D) -> GridFunction:
    """Rank-based empirical copula evaluated at all grid nodes at once."""
    n = p.n
    G = grid.G
    r1 = _rank_1based(p.eps1)
    r2 = _rank_1based(p.eps2)
    thresholds = np.ceil(grid.nodes * n - 1e-12).astype(np.int64)
    thresholds = np.minimum(thresholds, n)
    # bucket (a, b) = first grid level at which the pair starts counting
    a_idx = np.searchsorted(thresholds, r1, side="left")
    b_idx = np.searchsorted(thresholds, r2, side="left")
    counts = np.zeros((G + 1, G + 1))
    np.add.at(counts, (a_idx, b_idx), 1.0)
    surface = counts[:G, :G].cumsum(axis=0).cumsum(axis=1) / n
    return GridFunction(grid=grid, values=surface)


def partial_copula_known_margins(eps1, eps2, u: float, v: float) -> float:
    """Empirical joint CDF of exact conditional probability transforms.

    ``eps1``/``eps2`` are the true transforms from a simulation truth record
    (known-margins mode); the estimator is their plain bivariate ECDF.
    """
    eps1 = np.asarray(eps1, dtype=float)
    eps2 = np.asarray(eps2, dtype=float)
    return float(np.mean((eps1 <= u) & (eps2 <= v)))


def _weighted_copula_surface(
    eps1: np.ndarray,
    eps2: np.ndarray,
    w: np.ndarray,
    grid: Grid2D,
    order1: np.ndarray | None = None,
    order2: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted analogue of the rank-based empirical copula on the grid.

    Joint weighted ECDF of the pseudo-pairs composed with the generalized
    inverses of its weighted margins, evaluated at all grid nodes.
    """
    n = eps1.size
    G = grid.G
    if order1 is None:
        order1 = np.argsort(eps1, kind="stable")
    if order2 is None:
        order2 = np.argsort(eps2, kind="stable")
    cum1 = np.cumsum(w[order1])
    cum2 = np.cumsum(w[order2])
    # sorted position of the weighted quantile for each grid level
    pos1 = np.searchsorted(cum1, grid.nodes - 1e-12, side="left")
    pos2 = np.searchsorted(cum2, grid.nodes - 1e-12, side="left")
    pos1 = np.minimum(pos1, n - 1)
    pos2 = np.minimum(pos2, n - 1)
    sortpos1 = np.empty(n, dtype=np.int64)
    sortpos1[order1] = np.arange(n)
    sortpos2 = np.empty(n, dtype=np.int64)
    sortpos2[order2] = np.arange(n)
    a_idx = np.searchsorted(pos1, sortpos1, side="left")
    b_idx = np.searchsorted(pos2, sortpos2, side="left")
    mass = np.zeros((G + 1, G + 1))
    np.add.at(mass, (a_idx, b_idx), w)
    return mass[:G, :G].cumsum(axis=0).cumsum(axis=1)


def weighted_copula_trajectory(
    x: float,
    s: Sample,
    k: KernelSpec,
    k1: KernelSpec,
    k2: KernelSpec,
    grid: Grid2D,
    pseudo: PseudoSample | None = None,
) -> GridFunction:
    """Transformed plug-in conditional copula estimate at covariate value x.

    Margins are removed via the pseudo-observations (bandwidths from
    ``k1``/``k2``); the conditional joint law is the NW-weighted ECDF of the
    pseudo-pairs with bandwidth from ``k``, composed with the generalized
    inverses of its own weighted margins. A precomputed ``pseudo`` sample may
    be shared across calls at different x.
    """
    if pseudo is None:
        pseudo = pseudo_observations(s, k1, k2)
    w = nw_weights(x, s.x, k).require_valid(f"at x={x:g}")
    values = _weighted_copula_surface(pseudo.eps1, pseudo.eps2, w, grid)
    return GridFunction(grid=grid, values=np.clip(values, 0.0, 1.0))


def weighted_copula_surfaces(
    xs_eval: np.ndarray,
    s: Sample,
    k: KernelSpec,
    grid: Grid2D,
    pseudo: PseudoSample,
) -> np.ndarray:
    """Stack of transformed-estimator surfaces, one per evaluation point.

    Returns an array of shape (len(xs_eval), G, G). The pseudo-observation
    sort orders are shared across evaluation points, so the per-point cost is
    O(n + G^2) after one O(n log n) sort.
    """
    xs_eval = np.asarray(xs_eval, dtype=float)
    order1 = np.argsort(pseudo.eps1, kind="stable")
    order2 = np.argsort(pseudo.eps2, kind="stable")
    out = np.empty((xs_eval.size, grid.G, grid.G))
    for i, x in enumerate(xs_eval):
        w = nw_weights(x, s.x, k).require_valid(f"at x={x:g}")
        out[i] = np.clip(
            _weighted_copula_surface(
                pseudo.eps1, pseudo.eps2, w, grid, order1, order2
            ),
            0.0,
            1.0,
        )
    return out


def rule_of_thumb_bandwidth(xs: np.ndarray, c: float = 1.0) -> float:
    """h = c * sd(X) * n^(-1/5); the default for all 'auto' bandwidths."""
    xs = np.asarray(xs, dtype=float)
    if xs.size < 2:
        raise ValueError("bandwidth rule needs at least 2 covariate values")
    sd = float(np.std(xs, ddof=1))
    if sd == 0.0:
        sd = 1.0
    return c * sd * xs.size ** (-0.2)


def write_sample_csv(s: Sample, path_or_buf) -> None:
    buf = io.StringIO()
    buf.write("y1,y2,x\n")
    for i in range(s.n):
        buf.write(f"{s.y1[i]:.17g},{s.y2[i]:.17g},{s.x[i]:.17g}\n")
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)


def read_sample_csv(path_or_buf) -> Sample:
    """Parse a ``y1,y2,x`` CSV; errors carry the offending line number."""
    if hasattr(path_or_buf, "read"):
        lines = path_or_buf.read().splitlines()
    else:
        with open(path_or_buf) as fh:
            lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "y1,y2,x":
        raise ValueError("sample CSV must start with header 'y1,y2,x'")
    y1, y2, x = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 fields, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric entry") from None
        if not all(np.isfinite(vals)):
            raise ValueError(f"line {lineno}: non-finite entry")
        y1.append(vals[0])
        y2.append(vals[1])
        x.append(vals[2])
    return Sample(y1=np.array(y1), y2=np.array(y2), x=np.array(x))
