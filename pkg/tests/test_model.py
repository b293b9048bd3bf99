import numpy as np
import pytest

from gamm_r2 import Dataset, DrawSet, Gamm, ModelSpec, ParamDraw, PriorConfig, SmoothTerm
from gamm_r2.families import FAMILIES
from gamm_r2.model import conditional_mean, conditional_variance, linear_predictor
from gamm_r2.simstudy import Section5Config, model_specs, simulate_section5
from helpers import intercept_only, make_model


@pytest.fixture(scope="module")
def fit2_model():
    sim = simulate_section5(Section5Config(seed=3))
    spec = model_specs()["fit2"]
    return Gamm(spec, Dataset.from_columns(sim.columns, spec)), sim


def random_draw(model, rng):
    phi = 2.0 if model.family.has_dispersion else None
    return ParamDraw(
        rng.normal(size=model.n_beta), rng.normal(size=model.n_b), rng.normal(size=model.n_gamma),
        phi, np.exp(rng.normal(size=len(model.spec.random))),
        np.exp(rng.normal(size=len(model.spec.smooth))),
    )


def test_linear_predictor_zero_coefficients(fit2_model):
    model, _ = fit2_model
    draw = ParamDraw(np.zeros(2), np.zeros(2), np.zeros(10), 2.0, [1.0], [1.0])
    assert linear_predictor(model, draw, 5) == 0.0


def test_linear_predictor_intercept_only():
    model, draw = intercept_only(FAMILIES["gaussian"], [0.1, 0.2, 0.3], 3.0, phi=1.0)
    assert linear_predictor(model, draw, 1) == 3.0


def test_linear_predictor_matches_hand_assembled_row(fit2_model, rng):
    model, sim = fit2_model
    draw = random_draw(model, rng)
    i = 17
    x1, z1, u1 = sim.columns["x1"][i], sim.columns["z1"][i], sim.columns["u1"][i]
    basis = model.bases[0]
    # evaluate the uncentered basis at u1 and subtract the training column means
    h = basis.raw([u1])[0] - basis.raw(sim.columns["u1"]).mean(axis=0)
    by_hand = draw.beta[0] + draw.beta[1] * x1 + draw.b[z1 - 1] + float(h @ draw.gamma)
    assert linear_predictor(model, draw, i) == pytest.approx(by_hand, abs=1e-12)


def test_conditional_mean_examples():
    m, d = intercept_only(FAMILIES["neg_binomial"], [0, 1, 2], 0.0, phi=2.0)
    assert conditional_mean(m, d, 0) == 1.0
    m, d = intercept_only(FAMILIES["gaussian"], [0, 1, 2], -1.7, phi=2.0)
    assert conditional_mean(m, d, 2) == -1.7
    m, d = intercept_only(FAMILIES["bernoulli"], [0, 1, 1], np.log(3.0))
    assert conditional_mean(m, d, 1) == pytest.approx(0.75, abs=1e-15)


def test_conditional_variance_examples():
    m, d = intercept_only(FAMILIES["poisson"], [0, 1, 2], np.log(4.0))
    assert conditional_variance(m, d, 0) == pytest.approx(4.0, rel=1e-15)
    m, d = intercept_only(FAMILIES["gaussian"], [0, 1, 2], 0.3, phi=2.0)
    assert conditional_variance(m, d, 0) == 0.5
    m, d = intercept_only(FAMILIES["neg_binomial"], [0, 1, 2], np.log(6.0), phi=2.0)
    assert conditional_variance(m, d, 0) == pytest.approx(24.0, rel=1e-14)


def test_design_round_trip(fit2_model, rng):
    model, _ = fit2_model
    for _ in range(100):
        draw = random_draw(model, rng)
        rowwise = np.array([linear_predictor(model, draw, i) for i in range(0, model.n, 7)])
        direct = model.design[::7] @ draw.coef
        np.testing.assert_allclose(rowwise, direct, atol=1e-12)


def test_group_indicators(rng):
    n = 40
    g = np.column_stack([rng.integers(1, 4, n), rng.integers(1, 3, n)])
    g[:3, 0] = [1, 2, 3]
    g[:2, 1] = [1, 2]
    model = make_model(FAMILIES["gaussian"], rng.normal(size=n), groups=g)
    for name, factor in zip(model.spec.random, g.T):
        Z = model.design[:, model.slices[name]]
        assert set(np.unique(Z)) == {0.0, 1.0}
        np.testing.assert_array_equal(Z.sum(axis=1), 1.0)
        np.testing.assert_array_equal(Z.argmax(axis=1), factor - 1)


def test_group_labels_coded_in_sorted_order():
    spec = ModelSpec("gaussian", (), ("site",))
    data = Dataset.from_columns({"y": [1.0, 2.0, 3.0, 4.0], "site": ["b", "a", "c", "a"]}, spec)
    np.testing.assert_array_equal(data.groups[:, 0], [2, 1, 3, 1])
    assert data.group_labels == (("a", "b", "c"),)


def test_matrix_forms_agree_with_single_draw(fit2_model, rng):
    model, _ = fit2_model
    draws = DrawSet.from_draws([random_draw(model, rng) for _ in range(5)])
    M = model.mean_matrix(draws)
    V = model.variance_matrix(draws)
    for l, d in enumerate(draws):
        np.testing.assert_allclose(M[l], model.mean(d), rtol=1e-14)
        np.testing.assert_allclose(V[l], model.variance(d), rtol=1e-14)


def test_term_subsets(fit2_model, rng):
    model, sim = fit2_model
    draw = random_draw(model, rng)
    eta0 = model.eta(draw, ["intercept", "x1"])
    np.testing.assert_allclose(eta0, draw.beta[0] + draw.beta[1] * sim.columns["x1"], atol=1e-13)
    with pytest.raises(KeyError):
        model.eta(draw, ["nope"])


def test_draw_names(fit2_model):
    model, _ = fit2_model
    names = model.draw_names()
    assert names[:4] == ["beta_0", "beta_1", "b_z1_1", "b_z1_2"]
    assert names[4:14] == [f"gamma_u1_{l}" for l in range(1, 11)]
    assert names[14:] == ["psi_z1", "tau_u1", "phi"]


def test_no_phi_column_without_dispersion():
    m = make_model(FAMILIES["poisson"], [0, 1, 2, 3], fixed=[0.1, 0.2, 0.3, 0.5])
    assert m.draw_names() == ["beta_0", "beta_1"]


def test_check_draw_dimensions(fit2_model):
    model, _ = fit2_model
    with pytest.raises(ValueError, match="beta"):
        model.eta(ParamDraw(np.zeros(3), np.zeros(2), np.zeros(10), 2.0, [1.0], [1.0]))
    with pytest.raises(ValueError, match="dispersion"):
        model.eta(ParamDraw(np.zeros(2), np.zeros(2), np.zeros(10), None, [1.0], [1.0]))


def test_response_outside_support_rejected():
    with pytest.raises(ValueError, match="support"):
        make_model(FAMILIES["poisson"], [0, 1, 2.5])


def test_spec_validation():
    with pytest.raises(ValueError, match="duplicate"):
        ModelSpec("gaussian", ("x", "x"))
    with pytest.raises(ValueError):
        ModelSpec("gaussian", ("x",), (), (SmoothTerm("x"),))
    with pytest.raises(ValueError):
        PriorConfig(beta_scale=0.0)
    with pytest.raises(ValueError):
        PriorConfig(dispersion_prior="cauchy")


def test_restrict_keeps_intercept():
    spec = model_specs()["fit2"]
    r = spec.restrict(["x1"])
    assert r.term_names == ["intercept", "x1"]


def test_drawset_indexing_and_subset(fit2_model, rng):
    model, _ = fit2_model
    ds = DrawSet.from_draws([random_draw(model, rng) for _ in range(6)], chain=[0, 0, 0, 1, 1, 1])
    d = ds[4]
    np.testing.assert_array_equal(d.coef, ds.coef[4])
    sub = ds.subset([1, 4])
    assert len(sub) == 2 and np.array_equal(sub.chain, [0, 1])
    assert ds.equals(DrawSet.from_draws(list(ds), chain=ds.chain))
    assert not ds.equals(sub)


def test_dataset_rejects_bad_codes():
    with pytest.raises(ValueError):
        Dataset([1.0, 2.0], np.empty((2, 0)), [[0], [1]], np.empty((2, 0)))
