import numpy as np
import pytest
from scipy.integrate import quad

from heatlab import NotApplicableError, node_nearest
from heatlab.checks import (
    check_cd,
    check_completeness,
    check_diameter,
    check_distance_sandwich,
    check_gradient_bound,
    check_harnack,
    check_isoperimetric_balls,
    check_kernel_bounds,
    check_kernel_laws,
    check_li_yau,
    check_log_sobolev,
    check_neumann_poincare,
    check_sobolev_embedding,
    check_sobolev_sharp,
    check_spectral_gap,
    check_spectrum,
    check_vertical_commutation,
    check_volume_regularity,
    diameter_bound,
    harnack_dimension,
    poincare_margin,
    sample_harnack_pairs,
    sharp_sobolev_sides,
)
from heatlab.fields import CDParameters
from heatlab.reports import Tolerance
from heatlab.suites import (
    NamedField,
    bump_fields,
    eigen_fields,
    horizontal_bump_fields,
    latitude_profiles,
    positive_fields,
    rectified_noise_fields,
)


def test_cd_sphere(sphere):
    model, oracle, spectral = sphere
    suite = eigen_fields(model, spectral, seed=0)
    rep = check_cd(model, oracle, suite, mode="riemannian")
    assert rep.passed
    assert rep.min_margin > -0.02 * rep.scale


def test_cd_euclid_equality(euclid2):
    model, oracle, _ = euclid2
    f = model.field(0.5 * np.sum(model.nodes**2, axis=1))
    rep = check_cd(model, oracle, [NamedField("half-square-norm", f)],
                   mode="riemannian", equality_fields=("half-square-norm",),
                   tolerance=Tolerance(1e-9, 1e-9), include_gamma_lemma=False)
    assert rep.passed
    eq = [s for s in rep.samples if s["field"].endswith("|equality")][0]
    assert eq["lhs"] < 1e-9   # the margin vanishes identically


def test_cd_heisenberg_scan_and_reproducibility(heis):
    model, oracle, vform, stepper = heis
    from heatlab.suites import sub_riemannian_suite

    params = CDParameters(0.0, 0.5, 1.0, 2.0)
    vals = []
    for seed in (5, 77):
        suite = sub_riemannian_suite(model, engine=stepper, seed=seed)
        rep = check_cd(model, oracle, suite, vform=vform, params=params,
                       mode="scan", nu_grid=np.geomspace(0.25, 64, 10))
        assert rep.passed
        vals.append(rep.metadata["rho1_scan"])
        assert vals[-1] > -0.02
    assert abs(vals[0] - vals[1]) <= 0.01 * max(1.0, abs(vals[0]))


def test_cd_generalized_margins(heis):
    model, oracle, vform, stepper = heis
    from heatlab.suites import sub_riemannian_suite

    params = CDParameters(0.0, 0.5, 1.0, 2.0)
    suite = sub_riemannian_suite(model, engine=stepper, seed=5)
    rep = check_cd(model, oracle, suite, vform=vform, params=params,
                   mode="generalized", nu_grid=[0.5, 1.0, 2.0, 8.0])
    assert rep.passed
    # the vertical coordinate saturates the inequality on the axis
    zmargins = [s["margin"] for s in rep.samples if s["field"] == "coord-2"]
    assert min(zmargins) == pytest.approx(0.0, abs=1e-10)


def test_cd_mode_errors(sphere):
    model, oracle, spectral = sphere
    suite = eigen_fields(model, spectral)[:1]
    with pytest.raises(NotApplicableError):
        check_cd(model, oracle, suite, mode="generalized")
    with pytest.raises(ValueError):
        check_cd(model, oracle, suite, mode="nonsense")


def test_vertical_commutation(heis):
    model, _, vform, _ = heis
    x, z = model.nodes[:, 0], model.nodes[:, 2]
    suite = [NamedField("xz", model.field(x * z))]
    suite += horizontal_bump_fields(model, widths=(0.5,))
    rep = check_vertical_commutation(model, vform, suite)
    assert rep.passed
    assert -rep.samples[0]["margin"] < 0.01    # xz residual is tiny


def test_gradient_bound(sphere, euclid2):
    model, oracle, spectral = sphere
    suite = eigen_fields(model, spectral, n_single=2, n_combo=1)
    rep = check_gradient_bound(model, oracle, spectral, suite, [0.0, 0.1, 0.5, 1.0])
    assert rep.passed
    t0 = [s for s in rep.samples if s["t"] == 0.0]
    assert all(abs(s["margin"]) < 1e-9 * rep.scale for s in t0)

    emodel, eoracle, espectral = euclid2
    esuite = [NamedField("coord-0", emodel.field(emodel.nodes[:, 0]))]
    erep = check_gradient_bound(emodel, eoracle, espectral, esuite, [0.05])
    assert erep.passed
    # translation-invariant gradient: both sides equal one
    s = erep.samples[-1]
    assert s["lhs"] == pytest.approx(1.0, abs=0.01)
    assert s["rhs"] == pytest.approx(1.0, abs=0.01)


def test_completeness(sphere, torus1):
    for model, _, spectral in (sphere, torus1):
        rep = check_completeness(model, spectral, [0.5, 2.0])
        assert rep.passed and rep.min_margin > -1e-10


def test_spectral_gap_poincare(sphere):
    model, oracle, spectral = sphere
    rep = check_spectral_gap(model, oracle, spectral, n_random=100, seed=0)
    assert rep.passed
    assert rep.metadata["lambda1"] == pytest.approx(2.0, rel=0.02)
    # extremal eigenfunction saturates the Poincare inequality
    phi1 = model.field(spectral.eigenfields[:, 1])
    sat = poincare_margin(model, phi1, 0.5) / model.inner(phi1, phi1)
    assert abs(sat) < 0.01


def test_spectral_gap_needs_positive_curvature(euclid2):
    model, oracle, spectral = euclid2
    with pytest.raises(NotApplicableError):
        check_spectral_gap(model, oracle, spectral)


def test_log_sobolev(sphere):
    model, oracle, spectral = sphere
    suite = positive_fields(model, spectral)
    rep = check_log_sobolev(model, oracle, spectral, suite,
                            t_grid=np.linspace(0.3, 1.5, 7))
    assert rep.passed
    assert rep.metadata["entropy_slope"] <= -2.0 + 0.05
    assert rep.metadata["constant"] == 2.0


def test_li_yau_flat_sharp(euclid2):
    model, oracle, spectral = euclid2
    i0 = node_nearest(model, [0.0, 0.0])
    delta = np.zeros(model.n_nodes)
    delta[i0] = 1.0 / model.mu[i0]
    suite = [NamedField("point-source", model.field(delta))]
    suite += bump_fields(model, centers=[i0], width=0.25)
    rep = check_li_yau(model, oracle, spectral, suite, [0.05, 0.1], mode="rho0",
                       saturation_fields=("point-source",), saturation_rtol=0.01)
    assert rep.passed
    sat = [s for s in rep.samples if s["field"].endswith("|saturation")][0]
    assert sat["lhs"] <= sat["rhs"]


def test_li_yau_modes_sphere(sphere):
    model, oracle, spectral = sphere
    suite = positive_fields(model, spectral)[:3]
    for mode, grid, kw in (
        ("general-alpha", [0.25, 0.5, 1.0], {"alpha": 1.0}),
        ("bakry-qian", [2.0, 3.0], {}),
        ("exponential", [0.3, 0.6], {}),
    ):
        rep = check_li_yau(model, oracle, spectral, suite, grid, mode=mode, **kw)
        assert rep.passed, mode


def test_li_yau_schedule_equivalence(sphere):
    # alpha-power weight integrals fed through the schedule mode must
    # reproduce the closed-form alpha member exactly
    model, oracle, spectral = sphere
    suite = positive_fields(model, spectral)[:2]
    t_grid = [0.25, 0.5]
    schedules = [(t / 3.0, 1.0 / t) for t in t_grid]
    a = check_li_yau(model, oracle, spectral, suite, t_grid, mode="v-schedule",
                     schedules=schedules)
    b = check_li_yau(model, oracle, spectral, suite, t_grid,
                     mode="general-alpha", alpha=1.0)
    assert a.min_margin == pytest.approx(b.min_margin, abs=1e-12)


def test_exponential_schedule_coefficients():
    # quadrature of the decaying weight reproduces the closed coefficients
    rho, n = 1.0, 2.0
    for T in (0.3, 0.6, 1.1):
        B = np.exp(-2 * rho * T / 3)

        def V(t):
            return np.exp(-rho * t / 3) * (np.exp(-2 * rho * t / 3) - B) / (1 - B)

        def dV(t, h=1e-6):
            return (V(t + h) - V(t - h)) / (2 * h)

        i2 = quad(lambda t: V(t) ** 2, 0, T)[0]
        i2p = quad(lambda t: dV(t) ** 2, 0, T)[0]
        assert 1 - 2 * rho * i2 == pytest.approx(B, abs=1e-9)
        assert 0.5 * n * (i2p + rho**2 * i2 - rho) == pytest.approx(
            (n * rho / 3) * B**2 / (1 - B), abs=1e-7)


def test_li_yau_errors(euclid2, sphere):
    model, oracle, spectral = euclid2
    suite = bump_fields(model, seed=0)
    with pytest.raises(NotApplicableError):
        check_li_yau(model, oracle, spectral, suite, [1.0], mode="bakry-qian")
    smodel, soracle, sspectral = sphere
    with pytest.raises(ValueError):
        check_li_yau(smodel, soracle, sspectral,
                     positive_fields(smodel, sspectral)[:1], [0.5],
                     mode="bakry-qian")   # t < 2/rho


def test_li_yau_sub_riemannian(heis):
    model, oracle, vform, stepper = heis
    suite = horizontal_bump_fields(model, widths=(0.5,))
    rep = check_li_yau(model, oracle, stepper, suite, [0.02, 0.05],
                       mode="sub-riemannian", alpha=3.0, vform=vform,
                       params=oracle.cd_params)
    assert rep.passed


def test_harnack_dimension_arithmetic():
    assert harnack_dimension(3.0, 0.0, 0.5, 2.0) == pytest.approx(2.0)  # D_3 = n
    assert harnack_dimension(3.0, 1.0, 0.5, 2.0) == pytest.approx(8.0)
    with pytest.raises(ValueError):
        harnack_dimension(2.0, 0.0, 0.5, 2.0)


def test_harnack_flat_saturation(euclid2):
    model, oracle, spectral = euclid2
    i0 = node_nearest(model, [0.0, 0.0])
    delta = np.zeros(model.n_nodes)
    delta[i0] = 1.0 / model.mu[i0]
    rep = check_harnack(model, oracle, spectral,
                        [NamedField("point-source", model.field(delta))],
                        [(i0, 0.05, i0, 0.1)])
    assert rep.passed
    assert abs(rep.samples[0]["margin"]) < 0.02   # matched scaling, near equality


def test_harnack_pairs_and_errors(sphere):
    model, oracle, spectral = sphere
    pairs = sample_harnack_pairs(model, 50, [0.1, 0.2], [0.1, 0.3], seed=1)
    suite = bump_fields(model, seed=1)
    rep = check_harnack(model, oracle, spectral, suite, pairs)
    assert rep.passed
    with pytest.raises(ValueError):
        check_harnack(model, oracle, spectral, suite, [(0, 0.2, 1, 0.1)])


def test_kernel_bounds_flat(euclid2):
    model, oracle, spectral = euclid2
    i0 = node_nearest(model, [0, 0])
    near = [node_nearest(model, [0.2, 0.1]), node_nearest(model, [-0.15, 0.2])]
    pairs = [(i0, near[0], 0.05), (i0, near[1], 0.1)]
    rep = check_kernel_bounds(model, oracle, spectral, engine=spectral,
                              pair_sample=pairs, centers=[i0],
                              radii=[0.3, 0.4, 0.5, 0.6],
                              equality_expected=True)
    assert rep.passed
    assert rep.metadata["ondiag_upper_C"] == pytest.approx(0.25, rel=0.05)
    assert rep.metadata["ondiag_lower_K"] == pytest.approx(0.125, rel=0.05)
    assert rep.metadata["ball_mass_K"] > 0


def test_volume_doubling(euclid2, sphere):
    model, oracle, _ = euclid2
    i0 = node_nearest(model, [0, 0])
    rep = check_volume_regularity(model, oracle, [i0], [0.3, 0.45, 0.6],
                                  ratio_window=(3.7, 4.3))
    assert rep.passed
    assert rep.metadata["oracle_small_ratio"] == pytest.approx(4.0)
    with pytest.raises(ValueError):
        check_volume_regularity(model, oracle, [i0], [1.0])   # hits the wall

    smodel, soracle, _ = sphere
    pole = node_nearest(smodel, [0, 0, 1])
    # radii between latitude shells keep the pole-ball staircase unbiased
    h = smodel.meta["h"]
    radii = (np.array([4, 5, 7]) + 0.5) * h
    rep2 = check_volume_regularity(smodel, soracle, [pole], radii,
                                   monotone_upper=4.0,
                                   tolerance=Tolerance(1e-12, 0.06))
    assert rep2.passed
    up = [s for s in rep2.samples if s["part"] == "ratio-upper-oracle"][0]
    assert up["margin"] >= 0.0   # cap concavity in closed form


def test_neumann_poincare(euclid1):
    from heatlab import neumann_restrict

    model, _, _ = euclid1
    sub = neumann_restrict(model, np.abs(model.nodes[:, 0]) <= 0.5)
    length = sub.n_nodes * model.meta["h"]
    rep = check_neumann_poincare(sub, diameter=length, constant=np.pi**2,
                                 expected_product=np.pi**2, product_rtol=0.01)
    assert rep.passed
    assert rep.metadata["product"] == pytest.approx(np.pi**2, rel=0.01)


def test_sobolev_embedding(euclid3):
    model, oracle = euclid3
    i0 = node_nearest(model, [0, 0, 0])
    rep = check_sobolev_embedding(model, oracle,
                                  bump_fields(model, centers=[i0], width=0.25))
    assert rep.passed
    expected = 2 ** (2 / 3) * 6 * ((4 * np.pi) ** -1.5) ** (1 / 3) / np.sqrt(np.pi)
    assert rep.metadata["constant"] == pytest.approx(expected)


def test_isoperimetric(euclid2):
    model, oracle, _ = euclid2
    centers = [node_nearest(model, c) for c in
               ([0, 0], [0.2, 0.1], [-0.15, 0.25], [0.1, -0.2], [-0.05, -0.12])]
    rep = check_isoperimetric_balls(model, oracle, centers, [0.3, 0.4, 0.5, 0.6],
                                    expected_ratio=1 / (2 * np.sqrt(np.pi)))
    assert rep.passed
    assert rep.metadata["ratio_mean"] == pytest.approx(1 / (2 * np.sqrt(np.pi)),
                                                       rel=0.05)


def test_sharp_sobolev_family(sphere):
    model, oracle, spectral = sphere
    suite = positive_fields(model, spectral)
    pole = node_nearest(model, [0, 0, 1])
    extremal = latitude_profiles(model, pole, p=40.0, lams=(0.05, 0.1, 0.2))
    rep = check_sobolev_sharp(model, oracle, suite, p_list=(1.0, 2.0, 40.0),
                              extremal_suite=extremal)
    assert rep.passed
    assert rep.metadata["extremal_worst_gap"] < 0.05


def test_sharp_p1_matches_poincare(sphere):
    model, oracle, spectral = sphere
    f = positive_fields(model, spectral)[1].field
    lhs, rhs = sharp_sobolev_sides(model, oracle, f.values, 1.0)
    pm = poincare_margin(model, f, 0.5, absolute=True)
    assert (rhs - lhs) == pytest.approx(2.0 * pm / model.total_measure, abs=1e-8)


def test_diameter_bound(sphere):
    model, oracle, _ = sphere
    rep = check_diameter(model, oracle, p=40.0)
    assert rep.passed
    assert rep.metadata["bound"] >= np.pi
    assert rep.metadata["bound"] == pytest.approx(np.pi * np.sqrt(40.0 / 38.0),
                                                  rel=1e-12)
    assert rep.metadata["bound"] <= 1.05 * np.pi
    with pytest.raises(ValueError):
        diameter_bound(2.0, 1.0)


def test_distance_sandwich_checks(sphere, heis):
    for bundle, pairs in ((sphere, 15), (heis, 8)):
        model, oracle = bundle[0], bundle[1]
        rep = check_distance_sandwich(model, oracle, n_pairs=pairs, seed=4,
                                      budget=10)
        assert rep.passed


def test_kernel_laws_and_spectrum(torus1):
    model, oracle, spectral = torus1
    from heatlab import CrankNicolson

    rep = check_kernel_laws(model, oracle, spectral,
                            engine2=CrankNicolson(model), seed=0)
    assert rep.passed
    assert rep.metadata["cross_engine_sup_diff"] < 1e-4
    rep2 = check_spectrum(model, oracle, spectral, count=5, rtol=0.01)
    assert rep2.passed
