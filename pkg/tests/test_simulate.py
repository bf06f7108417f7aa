import numpy as np
import pytest
from scipy import stats

from condcopula.grid import inner_product, make_grid
from condcopula.simulate import (
    ConditionalModel,
    CopulaModel,
    MarginSpec,
    SyntheticKLModel,
    TauLink,
    conditional_v_given_u,
    copula_cdf,
    cosine_tensor,
    frank_tau,
    sample_conditional,
    synthetic_kl_sample,
    tau_to_theta,
    true_conditional_copula,
)

FIXED_MODELS = [
    CopulaModel("independence"),
    CopulaModel("clayton", 2.0),
    CopulaModel("frank", 5.0),
    CopulaModel("fgm", 0.8),
    CopulaModel("gumbel", 2.0),
]


def numerical_tau(m: CopulaModel, nodes: int = 80) -> float:
    """Independent Kendall-tau oracle: 1 - 4 int dC/du dC/dv du dv.

    Both partial derivatives come from central finite differences of the
    closed-form CDF on a Gauss-Legendre grid, so the oracle shares no code
    with the tau-to-parameter maps under test.
    """
    z, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * (z + 1.0)
    w = 0.5 * w
    h = 1e-6
    U, V = np.meshgrid(u, u, indexing="ij")
    du = (copula_cdf(m, U + h, V) - copula_cdf(m, U - h, V)) / (2 * h)
    dv = (copula_cdf(m, U, V + h) - copula_cdf(m, U, V - h)) / (2 * h)
    integral = float(w @ (du * dv) @ w)
    return 1.0 - 4.0 * integral


# ------------------------------------------------------------- copula CDFs


@pytest.mark.parametrize("m", FIXED_MODELS, ids=lambda m: m.family)
def test_margins_are_uniform(m):
    us = np.linspace(0.0, 1.0, 11)
    assert np.allclose(copula_cdf(m, us, np.ones_like(us)), us, atol=1e-12)
    assert np.allclose(copula_cdf(m, np.ones_like(us), us), us, atol=1e-12)


def test_clayton_closed_form_value():
    assert copula_cdf(CopulaModel("clayton", 2.0), 0.5, 0.5) == pytest.approx(
        7.0 ** -0.5, abs=1e-12
    )


def test_fgm_closed_form_value():
    assert copula_cdf(CopulaModel("fgm", 1.0), 0.5, 0.5) == pytest.approx(
        0.3125, abs=1e-15
    )


@pytest.mark.parametrize("m", FIXED_MODELS, ids=lambda m: m.family)
def test_frechet_envelope(m):
    us = np.linspace(0.0, 1.0, 21)
    U, V = np.meshgrid(us, us, indexing="ij")
    c = copula_cdf(m, U, V)
    assert np.all(c >= np.maximum(U + V - 1.0, 0.0) - 1e-12)
    assert np.all(c <= np.minimum(U, V) + 1e-12)


def test_arguments_outside_unit_interval_rejected():
    with pytest.raises(ValueError):
        copula_cdf(CopulaModel("independence"), 1.2, 0.5)


def test_family_parameter_ranges():
    with pytest.raises(ValueError):
        CopulaModel("clayton", -1.0)
    with pytest.raises(ValueError):
        CopulaModel("frank", 0.0)
    with pytest.raises(ValueError):
        CopulaModel("fgm", 1.5)
    with pytest.raises(ValueError):
        CopulaModel("gumbel", 0.5)
    with pytest.raises(ValueError, match="family"):
        CopulaModel("gaussian", 0.5)


# --------------------------------------------------------- tau <-> parameter


def test_clayton_tau_half_is_theta_two():
    theta = tau_to_theta("clayton", 0.5)
    assert theta == pytest.approx(2.0, abs=1e-12)
    assert numerical_tau(CopulaModel("clayton", theta)) == pytest.approx(
        0.5, abs=1e-4
    )


def test_fgm_tau_mapping():
    theta = tau_to_theta("fgm", 2.0 / 9.0)
    assert theta == pytest.approx(1.0, abs=1e-12)
    assert numerical_tau(CopulaModel("fgm", theta)) == pytest.approx(
        2.0 / 9.0, abs=1e-4
    )


def test_gumbel_tau_mapping():
    theta = tau_to_theta("gumbel", 0.5)
    assert theta == pytest.approx(2.0, abs=1e-12)
    assert numerical_tau(CopulaModel("gumbel", theta)) == pytest.approx(
        0.5, abs=1e-3
    )


def test_clayton_continuity_at_independence():
    assert tau_to_theta("clayton", 1e-6) == pytest.approx(2e-6, rel=1e-4)


def test_frank_round_trip_and_symmetry():
    theta = tau_to_theta("frank", 0.5)
    assert frank_tau(theta) == pytest.approx(0.5, abs=1e-9)
    assert tau_to_theta("frank", -0.5) == pytest.approx(-theta, abs=1e-9)
    assert numerical_tau(CopulaModel("frank", theta)) == pytest.approx(
        0.5, abs=1e-4
    )


def test_tau_ranges_enforced():
    for family, bad in [
        ("clayton", -0.1),
        ("clayton", 1.0),
        ("fgm", 0.3),
        ("gumbel", 1.0),
        ("frank", 0.0),
        ("independence", 0.2),
    ]:
        with pytest.raises(ValueError):
            tau_to_theta(family, bad)


# ------------------------------------------------------------------ sampler


def test_empty_sample():
    model = ConditionalModel(
        family="independence", link=TauLink(form="constant", a=0.0)
    )
    s, truth = sample_conditional(model, 0, seed=0)
    assert s.n == 0
    assert truth.eps1.size == 0


def test_same_seed_identical_bytes():
    model = ConditionalModel(family="clayton", link=TauLink(form="sine", a=0.4, b=0.25))
    s1, t1 = sample_conditional(model, 50, seed=42)
    s2, t2 = sample_conditional(model, 50, seed=42)
    assert s1.y1.tobytes() == s2.y1.tobytes()
    assert s1.y2.tobytes() == s2.y2.tobytes()
    assert s1.x.tobytes() == s2.x.tobytes()
    assert t1.eps1.tobytes() == t2.eps1.tobytes()
    s3, _ = sample_conditional(model, 50, seed=43)
    assert s3.x.tobytes() != s1.x.tobytes()


def test_prefix_stability_of_substreams():
    # per-observation substreams: a longer run starts with the shorter one
    model = ConditionalModel(family="fgm", link=TauLink(form="constant", a=0.2))
    s_small, _ = sample_conditional(model, 20, seed=5)
    s_big, _ = sample_conditional(model, 40, seed=5)
    assert np.array_equal(s_big.x[:20], s_small.x)
    assert np.array_equal(s_big.y1[:20], s_small.y1)


def test_independence_sample_tau_near_zero():
    model = ConditionalModel(
        family="independence", link=TauLink(form="constant", a=0.0)
    )
    _, truth = sample_conditional(model, 5000, seed=7)
    tau = stats.kendalltau(truth.eps1, truth.eps2).statistic
    assert abs(tau) <= 0.03


@pytest.mark.parametrize("m", FIXED_MODELS, ids=lambda m: m.family)
def test_sampler_matches_cdf_on_lattice(m):
    # DKW-style check of the conditional-inversion sampler against the
    # closed-form CDF on a 21 x 21 lattice
    n = 30000
    rng = np.random.default_rng(100)
    u = np.clip(rng.random(n), 1e-12, 1 - 1e-12)
    p = np.clip(rng.random(n), 1e-12, 1 - 1e-12)
    v = np.array([conditional_v_given_u(m, float(ui), float(pi))
                  for ui, pi in zip(u, p)])
    lattice = np.linspace(0.05, 0.95, 21)
    worst = 0.0
    for a in lattice:
        inside = u <= a
        for b in lattice:
            emp = np.mean(inside & (v <= b))
            worst = max(worst, abs(emp - copula_cdf(m, a, b)))
    assert worst <= 0.015


def test_margins_push_through_quantiles():
    model = ConditionalModel(
        family="clayton",
        link=TauLink(form="constant", a=0.5),
        margin1=MarginSpec(a=1.0, b=2.0, s=0.5),
    )
    s, truth = sample_conditional(model, 200, seed=3)
    expected = 1.0 + 2.0 * s.x + 0.5 * stats.norm.ppf(truth.eps1)
    assert np.allclose(s.y1, expected, atol=1e-12)


def test_link_out_of_range_rejected():
    with pytest.raises(ValueError):
        ConditionalModel(family="clayton", link=TauLink(form="sine", a=0.1, b=0.5))


def test_link_parsing():
    lk = TauLink.parse("sine:0.4,0.25")
    assert (lk.form, lk.a, lk.b) == ("sine", 0.4, 0.25)
    assert TauLink.parse("constant:0.3")(0.9) == 0.3
    assert TauLink.parse("linear:0.1,0.2")(0.5) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        TauLink.parse("spline:1,2")
    with pytest.raises(ValueError):
        TauLink.parse("constant:1,2")


# ------------------------------------------------------ true copula surfaces


def test_true_surface_independence_is_uv():
    model = ConditionalModel(
        family="independence", link=TauLink(form="constant", a=0.0)
    )
    grid = make_grid(7)
    surf = true_conditional_copula(model, 0.3, grid)
    U, V = np.meshgrid(grid.nodes, grid.nodes, indexing="ij")
    assert np.allclose(surf.values, U * V, atol=1e-15)


def test_true_surface_clayton_third():
    model = ConditionalModel(
        family="clayton", link=TauLink(form="constant", a=1.0 / 3.0)
    )
    grid = make_grid(21)  # node index 10 sits exactly at 0.5
    surf = true_conditional_copula(model, 0.1, grid)
    assert surf.values[10, 10] == pytest.approx(1.0 / 3.0, abs=1e-10)


# -------------------------------------------------------- synthetic KL model


def test_cosine_tensor_orthonormal():
    grid = make_grid(9)
    fams = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 2)]
    for i, (p, q) in enumerate(fams):
        for r, s in fams[i:]:
            ip = inner_product(cosine_tensor(grid, p, q), cosine_tensor(grid, r, s))
            expected = 1.0 if (p, q) == (r, s) else 0.0
            assert ip == pytest.approx(expected, abs=1e-10)


def kl_model(**kw):
    grid = make_grid(9)
    U, V = np.meshgrid(grid.nodes, grid.nodes, indexing="ij")
    from condcopula.grid import GridFunction

    defaults = dict(
        grid=grid,
        mean=GridFunction(grid=grid, values=U * V),
        eigenvalues=(0.4, 0.2, 0.05),
        frequencies=((1, 1), (2, 1), (1, 2)),
    )
    defaults.update(kw)
    return SyntheticKLModel(**defaults)


def test_zero_noise_trajectories_equal_mean():
    m = kl_model(eigenvalues=(0.4,), frequencies=((1, 1),), noise_sd=(0.0,))
    ens, truth = synthetic_kl_sample(m, 5, seed=0)
    assert np.max(np.abs(ens.surfaces - m.mean.values[None])) == 0.0
    assert np.max(np.abs(truth.scores)) == 0.0


def test_score_variances_match_eigenvalues():
    m = kl_model()
    _, truth = synthetic_kl_sample(m, 10000, seed=2)
    var = truth.scores.var(axis=0, ddof=1)
    for k, lam in enumerate(m.eigenvalues):
        assert abs(var[k] - lam) <= 0.05 * lam


def test_exact_reconstruction_from_truth_scores():
    m = kl_model()
    ens, truth = synthetic_kl_sample(m, 12, seed=3)
    phis = np.stack([m.phi(k).values for k in (1, 2, 3)])
    recon = m.mean.values[None] + np.einsum("ik,kab->iab", truth.scores, phis)
    assert np.max(np.abs(recon - ens.surfaces)) <= 1e-12


def test_alpha_links_shift_scores():
    m = kl_model(
        alphas=(TauLink(form="sine", a=0.0, b=0.5), None, None),
        noise_sd=(0.0, 0.0, 0.0),
    )
    ens, truth = synthetic_kl_sample(m, 50, seed=4)
    expected = 0.5 * np.sin(2 * np.pi * truth.xs)
    assert np.allclose(truth.scores[:, 0], expected, atol=1e-12)
    assert np.max(np.abs(truth.scores[:, 1:])) == 0.0


def test_kl_model_validation():
    with pytest.raises(ValueError, match="decreasing"):
        kl_model(eigenvalues=(0.2, 0.4, 0.5))
    with pytest.raises(ValueError, match="distinct"):
        kl_model(frequencies=((1, 1), (1, 1), (2, 2)))
    with pytest.raises(ValueError, match="positive"):
        kl_model(eigenvalues=(0.4, 0.2, -0.1))


def test_true_gamma_field_spectral_form():
    m = kl_model()
    field = m.true_gamma_field()
    assert np.allclose(field, field.T)
    f1 = m.phi(1).flat()
    # quadrature action of the kernel on phi_1 returns lambda_1 phi_1
    acted = m.grid.cell_weight * field @ f1
    assert np.allclose(acted, 0.4 * f1, atol=1e-10)
