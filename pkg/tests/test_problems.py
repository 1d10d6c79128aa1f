import numpy as np
import pytest

from irlandweber import problems as pr
from irlandweber.geometry import SpaceGeometry
from irlandweber.verify import random_connected_edges

import reference as ref


def shipped():
    return {
        "diagonal": pr.make_diagonal_linear(4, [1.0, 0.8, 0.6, 0.5]),
        "monomial": pr.make_monomial(4, 1.5),
        "network": pr.make_default_network(),
    }


def inside(prob, rng, count, frac=0.95):
    R = prob.ball_radius if np.isfinite(prob.ball_radius) else 1.0
    return prob.ground_truth + pr.uniform_ball(rng, count, prob.domain_space.dimension, frac * R)


# --- diagonal -------------------------------------------------------------


def test_diagonal_examples():
    prob = pr.make_diagonal_linear(2, [1.0, 1.0])
    assert np.array_equal(prob.apply([2.0, 3.0]), [2.0, 3.0])
    prob = pr.make_diagonal_linear(2, [2.0, 0.5])
    assert np.array_equal(prob.apply([1.0, 1.0]), [2.0, 0.5])
    assert prob.constants.deriv_bound_Lhat == 2.0
    assert prob.constants.lipschitz_L == 0.0
    assert prob.constants.stability_eps == 1.0
    assert np.array_equal(prob.jacobian(np.zeros(2)), prob.jacobian(np.ones(2)).T)


def test_diagonal_rejects_nonpositive():
    with pytest.raises(ValueError):
        pr.make_diagonal_linear(2, [1.0, 0.0])
    with pytest.raises(ValueError):
        pr.make_diagonal_linear(2, [1.0, -2.0])


# --- monomial -------------------------------------------------------------


@pytest.mark.parametrize("m, eps", [(2.0, 0.0), (1.5, 1.0 / 3.0), (1.25, 0.6)])
def test_monomial_declared_eps(m, eps):
    assert pr.make_monomial(3, m).constants.stability_eps == pytest.approx(eps, rel=1e-15)


def test_monomial_near_linear_limit():
    assert pr.make_monomial(2, 1.0 + 1e-9).constants.stability_eps == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("m", [1.0, 0.5, 2.5])
def test_monomial_rejects_m(m):
    with pytest.raises(ValueError):
        pr.make_monomial(3, m)


def test_monomial_default_truth_away_from_zero():
    prob = pr.make_monomial(6, 1.5)
    assert np.min(np.abs(prob.ground_truth)) - prob.ball_radius >= 0.5
    assert np.isfinite(prob.constants.lipschitz_L)


# --- network --------------------------------------------------------------


def test_dtn_path_graph_exact():
    S = pr.dtn_map(2, 1, [(0, 2), (1, 2)], [1.0, 1.0])
    assert np.array_equal(S, [[0.5, -0.5], [-0.5, 0.5]])


def test_dtn_single_edge():
    c = 1.7
    S = pr.dtn_map(2, 0, [(0, 1)], [c])
    assert np.array_equal(S, [[c, -c], [-c, c]])


def test_dtn_homogeneity():
    rng = np.random.default_rng(0)
    edges = random_connected_edges(rng, 8)
    sigma = rng.uniform(0.5, 2.0, len(edges))
    S = pr.dtn_map(4, 4, edges, sigma)
    assert np.allclose(pr.dtn_map(4, 4, edges, 3.5 * sigma), 3.5 * S, rtol=1e-13, atol=1e-14)


def test_dtn_matches_elimination_oracle():
    rng = np.random.default_rng(4)
    for _ in range(30):
        b, i = int(rng.integers(2, 6)), int(rng.integers(1, 7))
        edges = random_connected_edges(rng, b + i)
        sigma = rng.uniform(0.2, 3.0, len(edges))
        S = pr.dtn_map(b, i, edges, sigma)
        assert np.allclose(S, ref.dtn_by_elimination(b, b + i, edges, sigma), rtol=1e-11, atol=1e-12)


def test_network_problem_output_matches_dtn():
    prob = pr.make_default_network()
    d = pr.DEFAULT_NETWORK
    S = pr.dtn_map(d["boundary_nodes"], d["interior_nodes"], d["edges"], d["sigma_truth"])
    assert np.allclose(prob.apply(prob.ground_truth), S.reshape(-1), rtol=1e-13, atol=1e-15)
    assert np.allclose(prob.data, prob.apply(prob.ground_truth), rtol=1e-12, atol=0)


def test_network_structural_errors():
    with pytest.raises(pr.StructuralError):
        pr.make_resistor_network(2, 2, [(0, 2), (1, 2)], [1.0, 1.0])  # node 3 isolated
    with pytest.raises(ValueError):
        pr.make_resistor_network(2, 1, [(0, 2), (1, 2)], [1.0, -1.0])
    with pytest.raises(pr.StructuralError):
        pr.dtn_map(2, 1, [(0, 0), (1, 2)], [1.0, 1.0])


def test_network_symmetric_conservative():
    rng = np.random.default_rng(9)
    for _ in range(50):
        n = int(rng.integers(3, 13))
        b = int(rng.integers(2, n))
        edges = random_connected_edges(rng, n)
        S = pr.dtn_map(b, n - b, edges, rng.uniform(0.1, 5.0, len(edges)))
        assert np.abs(S - S.T).max() <= 1e-12
        assert np.abs(S.sum(axis=1)).max() <= 1e-12


def test_unidentifiable_network_has_no_constants():
    # a star with an interior hub: conductances identifiable; a path of two
    # interior nodes in series between two electrodes is not
    prob = pr.make_resistor_network(2, 2, [(0, 2), (2, 3), (3, 1)], [1.0, 1.0, 1.0])
    assert prob.constants is None


# --- shared invariants ----------------------------------------------------


@pytest.mark.parametrize("name", ["diagonal", "monomial", "network"])
def test_data_is_image_of_truth(name):
    prob = shipped()[name]
    assert np.allclose(prob.data, prob.apply(prob.ground_truth), rtol=1e-12, atol=0)


@pytest.mark.parametrize("name", ["diagonal", "monomial", "network"])
def test_derivative_is_linear(name):
    prob = shipped()[name]
    rng = np.random.default_rng(2)
    u = inside(prob, rng, 1)[0]
    h1, h2 = rng.standard_normal((2, prob.domain_space.dimension))
    a, b = 1.7, -0.3
    lhs = prob.apply_derivative(u, a * h1 + b * h2)
    rhs = a * prob.apply_derivative(u, h1) + b * prob.apply_derivative(u, h2)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(lhs)


@pytest.mark.parametrize("name", ["diagonal", "monomial", "network"])
def test_adjoint_identity(name):
    prob = shipped()[name]
    rng = np.random.default_rng(5)
    worst = 0.0
    for u in inside(prob, rng, 200):
        h = rng.standard_normal(prob.domain_space.dimension)
        w = rng.standard_normal(prob.range_space.dimension)
        worst = max(worst, pr.adjoint_mismatch(prob, u, h, w))
    assert worst <= 1e-10


def test_weighted_adjoint():
    sp = SpaceGeometry(3, 2.0, weights=[1.0, 2.0, 0.5])
    c = pr.make_diagonal_linear(3, [1.0, 2.0, 3.0]).constants
    prob = pr.make_diagonal_linear(3, [1.0, 2.0, 3.0], space=sp, constants=c)
    rng = np.random.default_rng(0)
    h, w = rng.standard_normal((2, 3))
    assert pr.adjoint_mismatch(prob, np.zeros(3), h, w) <= 1e-14


def test_finite_difference_examples():
    probs = shipped()
    rng = np.random.default_rng(1)
    d = probs["diagonal"]
    assert pr.finite_difference_check(d, rng.standard_normal(4), 10, 1e-3).max_error <= 1e-12
    m = probs["monomial"]
    assert pr.finite_difference_check(m, inside(m, rng, 1)[0], 10, 1e-5).max_error <= 1e-6
    n = probs["network"]
    assert pr.finite_difference_check(n, inside(n, rng, 1)[0], 10, 1e-6).max_error <= 1e-5


def test_finite_difference_skips_degenerate_directions():
    prob = pr.make_monomial(2, 1.5, ground_truth=[0.0, 0.0], ball_radius=0.1)
    chk = pr.finite_difference_check(prob, np.zeros(2), 4, 1e-5)
    assert chk.skipped == 4 and chk.checked == 0
    with pytest.raises(ValueError):
        pr.finite_difference_check(prob, np.zeros(2), 4, 0.0)


@pytest.mark.parametrize("name", ["diagonal", "monomial", "network"])
def test_declared_lipschitz_and_derivative_bounds(name):
    prob = shipped()[name]
    c = prob.constants
    rng = np.random.default_rng(17)
    a, b = inside(prob, rng, 300, 1.0), inside(prob, rng, 300, 1.0)
    for u1, u2 in zip(a, b):
        assert pr.derivative_norm(prob, u1) <= 1.01 * c.deriv_bound_Lhat
        assert pr.derivative_lipschitz_ratio(prob, u1, u2) <= 1.01 * c.lipschitz_L + 1e-12


@pytest.mark.parametrize("name", ["diagonal", "monomial", "network"])
def test_declared_stability_holds(name):
    prob = shipped()[name]
    c = prob.constants
    sp = prob.domain_space
    rng = np.random.default_rng(23)
    a, b = inside(prob, rng, 500, 1.0), inside(prob, rng, 500, 1.0)
    # include pairs anchored at the truth over several scales
    anchored = prob.ground_truth + pr.direction_samples(rng, 200, sp.dimension) * (
        prob.ball_radius if np.isfinite(prob.ball_radius) else 1.0
    ) * 10.0 ** rng.uniform(-3, 0, 200)[:, None]
    a = np.vstack([a, anchored])
    b = np.vstack([b, np.broadcast_to(prob.ground_truth, anchored.shape)])
    expo = (1.0 + c.stability_eps) * sp.p / 2.0
    for u1, u2 in zip(a, b):
        misfit = prob.range_space.norm(prob.apply(u1) - prob.apply(u2))
        assert sp.bregman(u1, u2) <= c.stability_CF**sp.p * misfit**expo * (1 + 1e-9)


# --- stability fit --------------------------------------------------------


def test_fit_diagonal_is_lipschitz():
    prob = shipped()["diagonal"]
    fit = pr.estimate_stability(prob, 500, 0, 1.0)
    assert fit.fitted_eps == pytest.approx(1.0, abs=0.05)
    assert fit.sample_count == 500
    assert np.isfinite(fit.residual_rms) and fit.residual_rms >= 0


def test_fit_monomial_near_truth():
    prob = pr.make_monomial(3, 1.5, ground_truth=np.zeros(3), ball_radius=0.25)
    fit = pr.estimate_stability(prob, 500, 0, 0.25)
    assert fit.fitted_eps == pytest.approx(1.0 / 3.0, abs=0.1)


def test_fit_holds_on_every_sample():
    prob = pr.make_monomial(3, 1.5, ground_truth=np.zeros(3), ball_radius=0.25)
    fit = pr.estimate_stability(prob, 200, 3, 0.25)
    keep = (fit.misfit > 1e-14) & (fit.bregman > 1e-14)
    bound = fit.fitted_cf**2 * fit.misfit[keep] ** fit.regression_slope
    assert np.all(fit.bregman[keep] <= bound * (1 + 1e-12))


def test_fit_deterministic():
    prob = shipped()["network"]
    a = pr.estimate_stability(prob, 100, 7, 0.05)
    b = pr.estimate_stability(prob, 100, 7, 0.05)
    assert a == b
    assert np.array_equal(a.bregman, b.bregman)


def test_fit_degenerate_cluster():
    prob = shipped()["diagonal"]
    with pytest.raises(pr.SamplingError):
        pr.estimate_stability(prob, 50, 0, 1e-20)
