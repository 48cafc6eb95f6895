import numpy as np
import pytest
import scipy.sparse as sp

from heatlab import (
    MismatchError,
    ScalarField,
    carre_du_champ,
    check_operator_axioms,
    deep_interior,
    gamma2,
    gamma2_z,
    gamma_z,
)
from heatlab.fields import (
    DiscretizedModel,
    EdgeForm,
    VerticalForm,
    carre_du_champ_operator_path,
    graph_laplacian,
    self_test_gamma,
)
from heatlab.models import ModelSpec, build_model


def test_field_validation(euclid2):
    model = euclid2[0]
    with pytest.raises(MismatchError):
        model.field(np.zeros(3))
    with pytest.raises(MismatchError):
        ScalarField("m", np.array([1.0, np.nan]))
    other = ScalarField("other-model", np.zeros(model.n_nodes))
    with pytest.raises(MismatchError):
        carre_du_champ(model, other)


def test_gamma_linear_field_is_unit(euclid2):
    model = euclid2[0]
    f = model.field(model.nodes[:, 0])
    g = carre_du_champ(model, f).values
    interior = deep_interior(model, hops=1)
    assert np.allclose(g[interior], 1.0, atol=1e-12)


def test_gamma_constant_is_zero(sphere):
    model = sphere[0]
    g = carre_du_champ(model, model.constant(3.7)).values
    assert np.max(np.abs(g)) < 1e-12


def test_gamma_two_evaluation_paths_agree(sphere, heis):
    for model in (sphere[0], heis[0]):
        assert self_test_gamma(model, seed=11) < 1e-9 * np.abs(model.L.data).max()


def test_gamma_heisenberg_vertical_coordinate(heis):
    # the lattice moves are exact flows, so Gamma(z) = (x^2 + y^2)/4 exactly
    model = heis[0]
    f = model.field(model.nodes[:, 2])
    g = carre_du_champ(model, f).values
    target = (model.nodes[:, 0] ** 2 + model.nodes[:, 1] ** 2) / 4
    interior = deep_interior(model, hops=1)
    assert np.max(np.abs(g[interior] - target[interior])) < 1e-12


def test_gamma2_quadratic_equals_dimension(euclid2):
    model = euclid2[0]
    f = model.field(0.5 * np.sum(model.nodes**2, axis=1))
    g2 = gamma2(model, f).values
    interior = deep_interior(model, hops=2)
    assert np.max(np.abs(g2[interior] - 2.0)) < 1e-10


def test_gamma2_constant_is_zero(euclid2):
    model = euclid2[0]
    g2 = gamma2(model, model.constant(1.0)).values
    assert np.max(np.abs(g2)) < 1e-12


def test_sphere_eigenfunction_cd_margin(sphere):
    model, oracle, spectral = sphere
    f = model.field(spectral.eigenfields[:, 1])
    marg = (gamma2(model, f).values
            - 0.5 * (model.L @ f.values) ** 2
            - carre_du_champ(model, f).values)
    interior = deep_interior(model, hops=2)
    scale = np.max(np.abs(gamma2(model, f).values))
    assert marg[interior].min() > -0.02 * scale


def test_vertical_form_coordinate(heis):
    model, _, vform, _ = heis
    f = model.field(model.nodes[:, 2])
    gz = gamma_z(model, vform, f).values
    interior = deep_interior(model, hops=1)
    assert np.max(np.abs(gz[interior] - 1.0)) < 1e-12


def test_vertical_form_empty_on_riemannian(sphere):
    model = sphere[0]
    empty = VerticalForm(model.model_id,
                         EdgeForm(np.empty(0, int), np.empty(0, int),
                                  np.empty(0), model.n_nodes))
    f = model.field(model.nodes[:, 0])
    assert np.all(gamma_z(model, empty, f).values == 0.0)
    assert np.all(gamma2_z(model, empty, f).values == 0.0)


def test_operator_axioms_pass_on_catalog(torus1, sphere, heis):
    for model in (torus1[0], sphere[0], heis[0]):
        rep = check_operator_axioms(model, n_random=25, seed=3)
        assert rep.passed, rep.worst_sample()


def test_operator_axioms_negative_control(tiny_torus):
    # one asymmetric entry must flip the verdict
    model = tiny_torus[0]
    L = model.L.tolil()
    L[0, 1] += 0.37
    bad = DiscretizedModel(
        model_id="corrupted", kind="torus", nodes=model.nodes, mu=model.mu,
        L=L.tocsr(), edge_form=model.edge_form, edge_length=model.edge_length,
        boundary_mask=model.boundary_mask)
    rep = check_operator_axioms(bad, n_random=10)
    assert not rep.passed


def test_gradient_of_gamma_bound_on_sphere(sphere):
    # on positive curvature: Gamma(Gamma f) <= 4 Gamma(f)(Gamma2(f) - Gamma(f))
    model, oracle, spectral = sphere
    interior = deep_interior(model, hops=2)
    rng = np.random.default_rng(0)
    for _ in range(4):
        f = model.field(spectral.eigenfields[:, 1:9] @ rng.standard_normal(8))
        g = carre_du_champ(model, f).values
        g2 = gamma2(model, f).values
        gg = carre_du_champ(model, model.field(g)).values
        lhs = gg[interior]
        rhs = (4 * g * (g2 - oracle.ricci_lower * g))[interior]
        scale = np.max(np.abs(4 * g * g2))
        assert (rhs - lhs).min() > -0.01 * scale


def test_chain_rule_consistency_rate():
    # Gamma(phi(f)) -> phi'(f)^2 Gamma(f) at a rate of at least one in h
    errs, hs = [], []
    for m in (32, 64):
        model, _, _ = build_model(ModelSpec("euclidean", dim=1, resolution=m,
                                            extent=1.0))
        x = model.nodes[:, 0]
        f = model.field(x)
        phi_f = model.field(np.sin(2 * x))
        lhs = carre_du_champ(model, phi_f).values
        rhs = (2 * np.cos(2 * x)) ** 2 * carre_du_champ(model, f).values
        interior = deep_interior(model, hops=1)
        errs.append(np.max(np.abs((lhs - rhs)[interior])))
        hs.append(model.meta["h"])
    rate = np.log(errs[0] / errs[1]) / np.log(hs[0] / hs[1])
    assert rate >= 1.0


def test_interior_masks(euclid2, sphere):
    model = euclid2[0]
    assert deep_interior(model, hops=1).sum() > deep_interior(model, hops=3).sum()
    # compact model: everything interior except the untrusted polar caps
    smodel = sphere[0]
    mask = deep_interior(smodel, hops=2)
    assert mask.sum() == smodel.meta["trusted_mask"].sum()


def test_graph_laplacian_row_sums(tiny_torus):
    model = tiny_torus[0]
    ones = np.ones(model.n_nodes)
    assert np.max(np.abs(model.L @ ones)) < 1e-12
    D = sp.diags(model.mu)
    M = D @ model.L
    assert abs(M - M.T).max() < 1e-14
