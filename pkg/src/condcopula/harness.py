"""Seeded Monte Carlo experiments.

Each experiment turns one of the asymptotic statements behind the estimator
into a desk-scale pass/fail check: uniform consistency along an n-ladder,
the Brownian-bridge covariance of the empirical partial copula, first-order
eigenfunction perturbation residuals, pseudo-margin uniformity plus the
rank-vs-known-margins gap, and a benchmark table against the plug-in
baseline. Replications own isolated RNG substreams and reports are reduced
in replication-index order, so results do not depend on worker count.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .conditional import KernelSpec, weighted_copula_trajectory
from .errors import DegenerateSpectrumError
from .estimator import PipelineConfig, estimate_conditional_copula
from .fpca import covariance_field, eigendecompose, tkn_projection, unit_sphere_identity
from .grid import GridFunction, l2_norm, make_grid, sup_distance
from .simulate import (
    ConditionalModel,
    MarginSpec,
    SyntheticKLModel,
    TauLink,
    copula_cdf,
    sample_conditional,
    synthetic_kl_sample,
    true_conditional_copula,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "consistency_experiment",
    "bridge_covariance_experiment",
    "eigen_perturbation_experiment",
    "uniformity_and_gap_experiment",
    "benchmark_vs_baseline",
]


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("CONDCOPULA_WORKERS", "1")))
    except ValueError:
        return 1


def _map_ordered(fn, items, workers: int):
    """Apply fn over items, preserving order regardless of worker count."""
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def rep_seed(base: int, step: int, rep: int) -> int:
    """Deterministic substream label for (ladder step, replication)."""
    return (int(base) * 1_000_003 + step * 10_007 + rep) & 0x7FFFFFFF


@dataclass(frozen=True)
class ExperimentConfig:
    """Serializable experiment description; unused fields stay at defaults."""

    experiment: str
    model: dict = field(default_factory=dict)
    n_ladder: tuple = (250, 500, 1000, 2000)
    replications: int = 50
    seed: int = 0
    estimator: dict = field(default_factory=dict)
    eval_points: tuple = ()
    tolerances: dict = field(default_factory=dict)
    grid_size: int = 21
    workers: int | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        ladder = tuple(int(n) for n in self.n_ladder)
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("n-ladder must be strictly increasing")
        object.__setattr__(self, "n_ladder", ladder)
        object.__setattr__(self, "eval_points", tuple(self.eval_points))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def effective_workers(self) -> int:
        return self.workers if self.workers is not None else default_workers()


@dataclass
class ExperimentReport:
    """Aggregated metrics, verdicts, and full provenance of one experiment."""

    experiment: str
    config: dict
    config_hash: str
    seeds: list
    metrics: dict
    passed: bool
    checks: dict
    runtime_s: float
    version: str = __version__
    failures: list = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    def to_json(self, path=None) -> str:
        # runtime is deliberately left out: a seeded report must be
        # byte-identical across runs and worker counts
        payload = {
            "experiment": self.experiment,
            "version": self.version,
            "config_hash": self.config_hash,
            "config": self.config,
            "seeds": self.seeds,
            "metrics": self.metrics,
            "checks": self.checks,
            "passed": self.passed,
            "failures": self.failures,
        }
        text = json.dumps(payload, indent=2, default=float) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_text(self) -> str:
        lines = [
            f"experiment : {self.experiment}",
            f"version    : {self.version}",
            f"config     : {self.config_hash}",
            f"runtime    : {self.runtime_s:.2f} s",
        ]
        for name, value in self.metrics.items():
            if isinstance(value, dict):
                lines.append(f"{name}:")
                for k, v in value.items():
                    lines.append(f"    {k:<16} {v}")
            else:
                lines.append(f"{name:<24} {value}")
        for name, ok in self.checks.items():
            lines.append(f"[{'PASS' if ok else 'FAIL'}] {name}")
        lines.append(f"overall    : {'PASS' if self.passed else 'FAIL'}")
        if self.failures:
            lines.append(f"failed replications: {len(self.failures)}")
        return "\n".join(lines) + "\n"

    def write_raw_csv(self, path) -> None:
        """Per-replication metrics, one row per (metric, n, rep)."""
        with open(path, "w") as fh:
            fh.write("metric,n,rep,value\n")
            for metric, per_n in self.raw.items():
                for n, vals in per_n.items():
                    for rep, v in enumerate(vals):
                        fh.write(f"{metric},{n},{rep},{v:.17g}\n")


def build_conditional_model(spec: dict) -> ConditionalModel:
    """Construct a parametric model from its serializable description."""
    link = spec.get("link", "constant:0.5")
    if isinstance(link, str):
        link = TauLink.parse(link)

    def margin(key, default):
        m = spec.get(key)
        return MarginSpec(*m) if m is not None else default

    return ConditionalModel(
        family=spec.get("family", "clayton"),
        link=link,
        margin1=margin("margin1", MarginSpec(a=0.0, b=1.0, s=1.0)),
        margin2=margin("margin2", MarginSpec(a=0.0, b=-1.0, s=1.0)),
        covariate=spec.get("covariate", "uniform"),
    )


def build_kl_model(spec: dict, grid_size: int) -> SyntheticKLModel:
    """Construct a synthetic mean-plus-eigenfunction model from a dict.

    ``alphas`` entries are null or [form, a, b] on the same named forms as
    the tau links.
    """
    grid = make_grid(grid_size)
    lam = tuple(spec.get("eigenvalues", (0.4, 0.2, 0.05)))
    freqs = tuple(
        tuple(f) for f in spec.get("frequencies", ((1, 1), (2, 1), (1, 2))[: len(lam)])
    )
    U, V = np.meshgrid(grid.nodes, grid.nodes, indexing="ij")
    mean = GridFunction(grid=grid, values=U * V)
    alphas = None
    if spec.get("alphas") is not None:
        alphas = tuple(
            None if a is None else TauLink(form=a[0], a=a[1], b=a[2])
            for a in spec["alphas"]
        )
    noise_sd = tuple(spec["noise_sd"]) if spec.get("noise_sd") else None
    return SyntheticKLModel(
        grid=grid,
        mean=mean,
        eigenvalues=lam,
        frequencies=freqs,
        alphas=alphas,
        noise_sd=noise_sd,
    )


def _median(vals) -> float:
    return float(np.median(np.asarray(vals, dtype=float)))


def consistency_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Median sup-grid error of the estimator along the n-ladder.

    Passes when the medians are strictly decreasing and the final median is
    below the calibrated bound.
    """
    t0 = time.perf_counter()
    model = build_conditional_model(cfg.model)
    grid = make_grid(cfg.grid_size)
    x_eval = cfg.eval_points[0] if cfg.eval_points else 0.5
    true_surf = true_conditional_copula(model, x_eval, grid)
    # verification targets the raw linear estimator; projection only if asked
    est_cfg = PipelineConfig(grid_size=cfg.grid_size, **{"project": False, **cfg.estimator})
    failures = []

    def one(args):
        step, rep, n = args
        seed = rep_seed(cfg.seed, step, rep)
        try:
            sample, _ = sample_conditional(model, n, seed)
            est = estimate_conditional_copula(x_eval, sample, est_cfg)
            return sup_distance(est.surface, true_surf)
        except (DegenerateSpectrumError, RuntimeError, ValueError) as exc:
            failures.append({"n": n, "rep": rep, "error": str(exc)})
            return np.nan

    raw = {}
    medians = {}
    for step, n in enumerate(cfg.n_ladder):
        vals = _map_ordered(
            one,
            [(step, r, n) for r in range(cfg.replications)],
            cfg.effective_workers(),
        )
        raw[n] = vals
        medians[n] = _median([v for v in vals if np.isfinite(v)])

    failures.sort(key=lambda f: (f["n"], f["rep"]))
    meds = [medians[n] for n in cfg.n_ladder]
    bound = cfg.tolerances.get("final_median", 0.08)
    checks = {
        "medians strictly decreasing": all(b < a for a, b in zip(meds, meds[1:])),
        f"final median <= {bound}": meds[-1] <= bound,
    }
    return ExperimentReport(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        config_hash=cfg.digest(),
        seeds=[rep_seed(cfg.seed, s, 0) for s in range(len(cfg.n_ladder))],
        metrics={"median_sup_error": {str(n): medians[n] for n in cfg.n_ladder}},
        passed=all(checks.values()),
        checks=checks,
        runtime_s=time.perf_counter() - t0,
        failures=failures,
        raw={"sup_error": raw},
    )


def _joint_ecdf(e1: np.ndarray, e2: np.ndarray, u: float, v: float) -> float:
    return float(np.mean((e1 <= u) & (e2 <= v)))


def bridge_covariance_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Empirical covariance of the known-margins partial-copula process.

    Requires a constant tau link, so the partial copula has a closed form.
    For each configured pair of evaluation points, compares the Monte Carlo
    covariance of sqrt(n) (ECDF - truth) against
    C(u ^ u', v ^ v') - C(u, v) C(u', v').
    """
    t0 = time.perf_counter()
    model = build_conditional_model(cfg.model)
    if model.link.form != "constant":
        raise ValueError("bridge covariance check needs a constant tau link")
    cop = model.copula_at(0.0)
    n = cfg.n_ladder[-1]
    R = cfg.replications
    pairs = cfg.eval_points or (((0.5, 0.5), (0.5, 0.5)),)
    tol_spec = cfg.tolerances.get("covariance", 0.02)
    tols = (
        list(tol_spec)
        if isinstance(tol_spec, (list, tuple))
        else [tol_spec] * len(pairs)
    )
    if len(tols) != len(pairs):
        raise ValueError("one covariance tolerance per point pair required")

    points = sorted({tuple(p) for pair in pairs for p in pair})

    def one(rep):
        _, truth = sample_conditional(model, n, rep_seed(cfg.seed, 0, rep))
        return [
            np.sqrt(n) * (_joint_ecdf(truth.eps1, truth.eps2, u, v)
                          - float(copula_cdf(cop, u, v)))
            for (u, v) in points
        ]

    vals = np.array(_map_ordered(one, range(R), cfg.effective_workers()))
    idx = {p: i for i, p in enumerate(points)}

    checks = {}
    metrics = {}
    for pair, tol in zip(pairs, tols):
        (u, v), (u2, v2) = (tuple(pair[0]), tuple(pair[1]))
        target = float(
            copula_cdf(cop, min(u, u2), min(v, v2))
            - copula_cdf(cop, u, v) * copula_cdf(cop, u2, v2)
        )
        a = vals[:, idx[(u, v)]]
        b = vals[:, idx[(u2, v2)]]
        emp = float(np.mean(a * b) - np.mean(a) * np.mean(b))
        label = f"cov(({u},{v}),({u2},{v2}))"
        metrics[label] = {"empirical": emp, "target": target}
        checks[f"{label} within {tol}"] = abs(emp - target) <= tol
    return ExperimentReport(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        config_hash=cfg.digest(),
        seeds=[rep_seed(cfg.seed, 0, 0)],
        metrics=metrics,
        passed=all(checks.values()),
        checks=checks,
        runtime_s=time.perf_counter() - t0,
    )


def eigen_perturbation_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """First-order perturbation residuals on the synthetic model.

    Per replication: decompose the oracle-mean covariance of a generated
    ensemble, sign-align the leading eigenfunction to the truth, and measure
    || sqrt(n)(phi_hat - phi) - T ||_2 for the first-order projection T built
    from sqrt(n) times the covariance-field error. Also asserts the exact
    unit-sphere identity and the distributional stability of
    || sqrt(n)(mean_hat - mean) ||_2 across the ladder.
    """
    t0 = time.perf_counter()
    model = build_kl_model(cfg.model, cfg.grid_size)
    grid = model.grid
    true_gamma = model.true_gamma_field()
    phi1 = model.phi(1)
    k_check = int(cfg.tolerances.get("component", 1))

    # eigensystem of the truth, for the perturbation formula
    from .fpca import CovarianceField, EigenSystem

    true_field = CovarianceField(grid=grid, values=true_gamma)
    true_es = eigendecompose(true_field)
    keep = int(np.count_nonzero(true_es.eigenvalues > 1e-9))
    true_es = EigenSystem(
        grid=grid,
        eigenvalues=true_es.eigenvalues[:keep],
        eigenfunctions=true_es.eigenfunctions[:keep],
        sign_flips=true_es.sign_flips[:keep],
    )

    def one(args):
        step, rep, n = args
        ens, _ = synthetic_kl_sample(model, n, rep_seed(cfg.seed, step, rep))
        field = covariance_field(ens, model.mean)
        es = eigendecompose(field)
        phi_hat = es.phi(k_check)
        phi_true = model.phi(k_check)
        # sign-align the estimate to the truth
        sign = 1.0 if np.sum(phi_hat.values * phi_true.values) >= 0 else -1.0
        phi_hat = GridFunction(grid=grid, values=sign * phi_hat.values)
        lhs, rhs = unit_sphere_identity(phi_hat, phi_true)
        zn = np.sqrt(n) * (field.values - true_gamma)
        t_kn = tkn_projection(zn, true_es, k_check)
        resid = GridFunction(
            grid=grid,
            values=np.sqrt(n) * (phi_hat.values - phi_true.values) - t_kn.values,
        )
        mean_dev = GridFunction(
            grid=grid,
            values=np.sqrt(n) * (ens.surfaces.mean(axis=0) - model.mean.values),
        )
        return l2_norm(resid), abs(lhs - rhs), l2_norm(mean_dev)

    raw_resid, raw_ident, raw_clt = {}, {}, {}
    for step, n in enumerate(cfg.n_ladder):
        out = _map_ordered(
            one,
            [(step, r, n) for r in range(cfg.replications)],
            cfg.effective_workers(),
        )
        raw_resid[n] = [o[0] for o in out]
        raw_ident[n] = [o[1] for o in out]
        raw_clt[n] = [o[2] for o in out]

    med_resid = [_median(raw_resid[n]) for n in cfg.n_ladder]
    med_clt = [_median(raw_clt[n]) for n in cfg.n_ladder]
    factor = cfg.tolerances.get("residual_factor", 2.0)
    ident_tol = cfg.tolerances.get("identity", 1e-10)
    clt_band = cfg.tolerances.get("clt_band", 0.2)
    max_ident = max(max(v) for v in raw_ident.values())
    clt_stable = all(
        abs(b - a) <= clt_band * a for a, b in zip(med_clt, med_clt[1:])
    )
    checks = {
        "residual medians decreasing": all(
            b < a for a, b in zip(med_resid, med_resid[1:])
        ),
        f"end-to-end residual factor >= {factor}": med_resid[0]
        >= factor * med_resid[-1],
        f"unit-sphere identity <= {ident_tol:g}": max_ident <= ident_tol,
        f"mean-CLT norm stable within {clt_band:.0%}": clt_stable,
    }
    return ExperimentReport(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        config_hash=cfg.digest(),
        seeds=[rep_seed(cfg.seed, s, 0) for s in range(len(cfg.n_ladder))],
        metrics={
            "median_residual": {str(n): m for n, m in zip(cfg.n_ladder, med_resid)},
            "median_clt_norm": {str(n): m for n, m in zip(cfg.n_ladder, med_clt)},
            "max_identity_gap": max_ident,
        },
        passed=all(checks.values()),
        checks=checks,
        runtime_s=time.perf_counter() - t0,
        raw={"residual": raw_resid, "clt_norm": raw_clt},
    )


def _rank_copula_on_lattice(e1, e2, levels) -> np.ndarray:
    """Rank-based empirical copula of (e1, e2) at a levels x levels lattice."""
    n = e1.size
    order1 = np.argsort(e1, kind="stable")
    order2 = np.argsort(e2, kind="stable")
    r1 = np.empty(n, dtype=np.int64)
    r1[order1] = np.arange(1, n + 1)
    r2 = np.empty(n, dtype=np.int64)
    r2[order2] = np.arange(1, n + 1)
    thresholds = np.minimum(np.ceil(levels * n - 1e-12), n).astype(np.int64)
    a_idx = np.searchsorted(thresholds, r1, side="left")
    b_idx = np.searchsorted(thresholds, r2, side="left")
    L = levels.size
    counts = np.zeros((L + 1, L + 1))
    np.add.at(counts, (a_idx, b_idx), 1.0)
    return counts[:L, :L].cumsum(axis=0).cumsum(axis=1) / n


def _joint_ecdf_on_lattice(e1, e2, levels) -> np.ndarray:
    n = e1.size
    a_idx = np.searchsorted(levels, e1, side="left")
    b_idx = np.searchsorted(levels, e2, side="left")
    L = levels.size
    counts = np.zeros((L + 1, L + 1))
    np.add.at(counts, (a_idx, b_idx), 1.0)
    return counts[:L, :L].cumsum(axis=0).cumsum(axis=1) / n


def ks_uniform_statistic(vals: np.ndarray) -> float:
    """One-sample Kolmogorov-Smirnov distance from Uniform(0, 1)."""
    vals = np.sort(np.asarray(vals, dtype=float))
    n = vals.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - vals), np.max(vals - (i - 1) / n)))


def uniformity_and_gap_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Pseudo-margin uniformity (known margins) and the rank-transform gap.

    KS distances of the exact conditional transforms from Uniform(0,1), and
    the sup over a 101 x 101 lattice of the distance between the rank-based
    copula estimator and the ECDF of the sample's normalized ranks, tested
    against the conservative 2/n bound (each margin threshold moves by at
    most one atom). The distance to the exact-margins ECDF is reported as an
    additional metric without an assertion; it fluctuates at the n^(-1/2)
    scale of the margins.
    """
    t0 = time.perf_counter()
    model = build_conditional_model(cfg.model)
    levels = np.linspace(0.0, 1.0, 101)
    R = cfg.replications
    crit_factor = cfg.tolerances.get("ks_critical", 1.63)
    pass_frac = cfg.tolerances.get("ks_pass_fraction", 0.95)

    def one(args):
        step, rep, n = args
        _, truth = sample_conditional(model, n, rep_seed(cfg.seed, step, rep))
        ks = max(
            ks_uniform_statistic(truth.eps1), ks_uniform_statistic(truth.eps2)
        )
        rank_surface = _rank_copula_on_lattice(truth.eps1, truth.eps2, levels)
        # normalized ranks of the same sample; the rank-based estimator can
        # move each margin threshold by at most one atom relative to their
        # ECDF, hence the 2/n bound
        n_obs = truth.eps1.size
        r1 = np.empty(n_obs)
        r1[np.argsort(truth.eps1, kind="stable")] = np.arange(1, n_obs + 1)
        r2 = np.empty(n_obs)
        r2[np.argsort(truth.eps2, kind="stable")] = np.arange(1, n_obs + 1)
        rank_ecdf = _joint_ecdf_on_lattice(r1 / n_obs, r2 / n_obs, levels)
        gap = float(np.max(np.abs(rank_surface - rank_ecdf)))
        # distance to the exact-margins ECDF, reported but not asserted
        # (it carries the O(n^-1/2) margin fluctuation)
        ecdf_surface = _joint_ecdf_on_lattice(truth.eps1, truth.eps2, levels)
        ecdf_gap = float(np.max(np.abs(rank_surface - ecdf_surface)))
        return ks, gap, ecdf_gap

    raw_ks, raw_gap, raw_ecdf_gap = {}, {}, {}
    for step, n in enumerate(cfg.n_ladder):
        out = _map_ordered(
            one, [(step, r, n) for r in range(R)], cfg.effective_workers()
        )
        raw_ks[n] = [o[0] for o in out]
        raw_gap[n] = [o[1] for o in out]
        raw_ecdf_gap[n] = [o[2] for o in out]

    checks = {}
    metrics = {
        "ks_pass_fraction": {},
        "max_gap_times_n": {},
        "median_exact_ecdf_gap": {},
    }
    for n in cfg.n_ladder:
        crit = crit_factor / np.sqrt(n)
        frac = float(np.mean(np.asarray(raw_ks[n]) < crit))
        metrics["ks_pass_fraction"][str(n)] = frac
        if n == cfg.n_ladder[-1]:
            # the asymptotic critical value is only trusted at the largest n;
            # smaller ladder steps are reported without a verdict
            checks[f"KS below {crit:.4f} in >= {pass_frac:.0%} at n={n}"] = (
                frac >= pass_frac
            )
        worst = max(raw_gap[n])
        metrics["max_gap_times_n"][str(n)] = worst * n
        metrics["median_exact_ecdf_gap"][str(n)] = _median(raw_ecdf_gap[n])
        checks[f"gap <= 2/n at n={n}"] = worst <= 2.0 / n + 1e-12
    return ExperimentReport(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        config_hash=cfg.digest(),
        seeds=[rep_seed(cfg.seed, s, 0) for s in range(len(cfg.n_ladder))],
        metrics=metrics,
        passed=all(checks.values()),
        checks=checks,
        runtime_s=time.perf_counter() - t0,
        raw={"ks": raw_ks, "gap": raw_gap, "exact_ecdf_gap": raw_ecdf_gap},
    )


def benchmark_vs_baseline(cfg: ExperimentConfig) -> ExperimentReport:
    """Error tables for the FPCA estimator and the plug-in baseline.

    Reports per-n median sup and L2 (MISE-style) grid errors for both
    estimators at the evaluation point; passes when both error columns
    decrease monotonically in median along the ladder. No superiority claim.
    """
    t0 = time.perf_counter()
    model = build_conditional_model(cfg.model)
    grid = make_grid(cfg.grid_size)
    x_eval = cfg.eval_points[0] if cfg.eval_points else 0.5
    true_surf = true_conditional_copula(model, x_eval, grid)
    est_cfg = PipelineConfig(grid_size=cfg.grid_size, **{"project": False, **cfg.estimator})
    failures = []

    def one(args):
        step, rep, n = args
        seed = rep_seed(cfg.seed, step, rep)
        try:
            sample, _ = sample_conditional(model, n, seed)
            est = estimate_conditional_copula(x_eval, sample, est_cfg)
            h = est.diagnostics["bandwidths"]["h"]
            fam = est_cfg.kernel_family
            k = KernelSpec(family=fam, bandwidth=h)
            g1 = KernelSpec(family=fam, bandwidth=est.diagnostics["bandwidths"]["g1"])
            g2 = KernelSpec(family=fam, bandwidth=est.diagnostics["bandwidths"]["g2"])
            base = weighted_copula_trajectory(x_eval, sample, k, g1, g2, grid)
            err = lambda f: (  # noqa: E731
                sup_distance(f, true_surf),
                l2_norm(GridFunction(grid=grid, values=f.values - true_surf.values)),
            )
            return (*err(est.surface), *err(base))
        except (DegenerateSpectrumError, RuntimeError, ValueError) as exc:
            failures.append({"n": n, "rep": rep, "error": str(exc)})
            return (np.nan,) * 4

    table = {}
    raw = {"kl_sup": {}, "kl_l2": {}, "base_sup": {}, "base_l2": {}}
    for step, n in enumerate(cfg.n_ladder):
        out = np.array(
            _map_ordered(
                one,
                [(step, r, n) for r in range(cfg.replications)],
                cfg.effective_workers(),
            )
        )
        ok = np.isfinite(out).all(axis=1)
        raw["kl_sup"][n] = list(out[:, 0])
        raw["kl_l2"][n] = list(out[:, 1])
        raw["base_sup"][n] = list(out[:, 2])
        raw["base_l2"][n] = list(out[:, 3])
        table[str(n)] = {
            "kl_sup": _median(out[ok, 0]),
            "kl_l2": _median(out[ok, 1]),
            "baseline_sup": _median(out[ok, 2]),
            "baseline_l2": _median(out[ok, 3]),
        }
    failures.sort(key=lambda f: (f["n"], f["rep"]))
    kl_meds = [table[str(n)]["kl_sup"] for n in cfg.n_ladder]
    base_meds = [table[str(n)]["baseline_sup"] for n in cfg.n_ladder]
    checks = {
        "KL estimator median errors decreasing": all(
            b < a for a, b in zip(kl_meds, kl_meds[1:])
        ),
        "baseline median errors decreasing": all(
            b < a for a, b in zip(base_meds, base_meds[1:])
        ),
    }
    return ExperimentReport(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        config_hash=cfg.digest(),
        seeds=[rep_seed(cfg.seed, s, 0) for s in range(len(cfg.n_ladder))],
        metrics={"error_table": table},
        passed=all(checks.values()),
        checks=checks,
        runtime_s=time.perf_counter() - t0,
        failures=failures,
        raw=raw,
    )
