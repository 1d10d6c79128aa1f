"""Forward problems with known ground truth, plus verification oracles.

Each problem maps a domain space ``U`` (a :class:`SpaceGeometry`) into a data
space ``V`` modelled as unweighted l^2 with the same duality gauge as ``U``.
Problems expose their Jacobian as a dense matrix; derivative and adjoint
actions are derived from it, so they are consistent by construction and the
adjoint oracle checks the weighting of the dual pairings.

Three families are provided:

* :func:`make_diagonal_linear` -- ``F(u) = diag(s) u``, Lipschitz stable.
* :func:`make_monomial` -- ``F(u)_i = |u_i|^(m-1) u_i``, Hölder stable with
  exponent ``2/m - 1``.
* :func:`make_resistor_network` -- conductances on graph edges mapped to the
  Dirichlet-to-Neumann matrix of the network (a discrete impedance
  tomography model).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .analysis import convergence_slope
from .constants import ProblemConstants
from .geometry import SpaceGeometry

log = logging.getLogger(__name__)

# multiplicative margin applied to constants that are estimated by sampling
SAMPLED_CONSTANT_MARGIN = 1.1


class StructuralError(ValueError):
    """The network graph cannot define a Dirichlet-to-Neumann map."""


class SamplingError(RuntimeError):
    """Sampling produced no usable (non-degenerate) pairs."""


class ForwardProblem:
    """Smooth map between a domain space and an l^2 data space.

    Subclasses implement :meth:`apply` and :meth:`jacobian`. ``constants``
    holds the declared bounds on the domain ball of norm radius
    ``ball_radius`` around ``ground_truth``; it is ``None`` when they could
    not be established (e.g. a non-identifiable network).
    """

    kind = "abstract"

    def __init__(self, domain_space, range_dim, ground_truth, ball_radius=math.inf):
        self.domain_space = domain_space
        self.range_space = SpaceGeometry.data_space(range_dim, domain_space.p)
        self.ground_truth = domain_space.check(ground_truth).copy()
        self.ground_truth.setflags(write=False)
        self.ball_radius = float(ball_radius)
        self.data = self.apply(self.ground_truth)
        self.data.setflags(write=False)
        self.constants: ProblemConstants | None = None

    def apply(self, u) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, u) -> np.ndarray:
        """Matrix of ``F'(u)`` with shape ``(range_dim, domain_dim)``."""
        raise NotImplementedError

    def apply_derivative(self, u, h) -> np.ndarray:
        return self.jacobian(u) @ self.domain_space.check(h)

    def apply_adjoint(self, u, w) -> np.ndarray:
        """``F'(u)^* w`` for ``w`` in the dual of ``V``, as an element of ``U*``."""
        w = self.range_space.check(w)
        return (self.jacobian(u).T @ (self.range_space.weights * w)) / self.domain_space.weights

    def require_constants(self) -> ProblemConstants:
        if self.constants is None:
            raise ValueError(f"{self.kind} problem has no declared constants")
        return self.constants

    def __repr__(self):
        return f"<{type(self).__name__} dim={self.domain_space.dimension}->{self.range_space.dimension}>"


class DiagonalLinearProblem(ForwardProblem):
    kind = "diagonal"

    def __init__(self, singular_values, ground_truth, space=None):
        s = np.asarray(singular_values, dtype=float).reshape(-1)
        if s.size == 0 or not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("singular values must be finite and positive")
        self.singular_values = s
        space = space or SpaceGeometry(s.size, 2.0)
        super().__init__(space, s.size, ground_truth)

    def apply(self, u):
        return self.singular_values * self.domain_space.check(u)

    def jacobian(self, u):
        return np.diag(self.singular_values)

    def apply_derivative(self, u, h):
        return self.singular_values * self.domain_space.check(h)

    def apply_adjoint(self, u, w):
        return self.singular_values * self.range_space.check(w) / self.domain_space.weights


def make_diagonal_linear(dimension, singular_values, ground_truth=None, space=None, constants=None):
    """Diagonal linear operator ``F(u)_i = s_i u_i``.

    In the Hilbert case the stability estimate ``(1/2)||u1-u2||^2 <=
    C_F^2 ||F(u1)-F(u2)||^2`` holds globally with ``C_F = 1/(sqrt(2) min s)``
    and eps = 1; ``L = 0`` and ``L_hat = max s``.
    """
    s = np.asarray(singular_values, dtype=float).reshape(-1)
    if s.size != dimension:
        raise ValueError(f"expected {dimension} singular values, got {s.size}")
    if np.any(s <= 0):
        raise ValueError("singular values must be positive")
    if ground_truth is None:
        ground_truth = np.full(dimension, 0.1)
    prob = DiagonalLinearProblem(s, ground_truth, space)
    if constants is None:
        if not prob.domain_space.is_hilbert or np.any(prob.domain_space.weights != 1.0):
            raise ValueError("analytic constants are derived for unweighted l^2 only; pass constants=")
        constants = ProblemConstants(
            lipschitz_L=0.0,
            deriv_bound_Lhat=float(s.max()),
            stability_CF=float(1.0 / (math.sqrt(2.0) * s.min())),
            stability_eps=1.0,
        )
    prob.constants = constants
    return prob


class MonomialProblem(ForwardProblem):
    kind = "monomial"

    def __init__(self, m, ground_truth, ball_radius, space):
        self.m = float(m)
        super().__init__(space, space.dimension, ground_truth, ball_radius)

    def apply(self, u):
        u = self.domain_space.check(u)
        return np.abs(u) ** (self.m - 1.0) * u

    def _slope(self, u):
        return self.m * np.abs(self.domain_space.check(u)) ** (self.m - 1.0)

    def jacobian(self, u):
        return np.diag(self._slope(u))

    def apply_derivative(self, u, h):
        return self._slope(u) * self.domain_space.check(h)

    def apply_adjoint(self, u, w):
        return self._slope(u) * self.range_space.check(w) / self.domain_space.weights


def default_monomial_truth(dimension):
    """Alternating-sign ground truth with magnitudes in [0.75, 1]."""
    mags = np.linspace(0.75, 1.0, dimension) if dimension > 1 else np.array([0.875])
    signs = np.where(np.arange(dimension) % 2 == 0, 1.0, -1.0)
    return signs * mags


def monomial_constants(m, ground_truth, ball_radius):
    """Declared constants of the monomial map on an l^2 ball.

    Two stability constants are valid: a global one from the uniform
    monotonicity ``|f(a)-f(b)| >= 2^(1-m) |a-b|^m`` and a local one from the
    lower bound ``f' >= m m0^(m-1)`` when every coordinate stays at least
    ``m0 > 0`` away from zero. The smaller is declared.
    """
    u = np.asarray(ground_truth, dtype=float)
    n = u.size
    R = float(ball_radius)
    m0 = float(np.min(np.abs(u))) - R
    eps = 2.0 / m - 1.0
    lhat = m * (float(np.max(np.abs(u))) + R) ** (m - 1.0)
    if m == 2.0:
        lip = 2.0
    elif m0 > 0:
        lip = m * (m - 1.0) * m0 ** (m - 2.0)
    else:
        lip = math.inf
    cf_sq = 0.5 * (2.0 ** (m - 1.0) * n ** ((m - 1.0) / 2.0)) ** (2.0 / m)
    if m0 > 0:
        local = 0.5 * (2.0 * R) ** (2.0 - 2.0 / m) * (m * m0 ** (m - 1.0)) ** (-2.0 / m)
        cf_sq = min(cf_sq, local)
    return ProblemConstants(
        lipschitz_L=lip,
        deriv_bound_Lhat=lhat,
        stability_CF=math.sqrt(cf_sq),
        stability_eps=eps,
    )


def make_monomial(dimension, m, ground_truth=None, ball_radius=None, space=None, constants=None):
    """Componentwise power map ``F(u)_i = |u_i|^(m-1) u_i`` on unweighted l^2.

    ``m`` lies in (1, 2]; the declared Hölder exponent is ``2/m - 1``. The
    default ground truth keeps ``|u_i| >= 0.5`` on the default ball of
    radius 0.25, so the derivative is Lipschitz there. Passing a ground
    truth at the origin gives the degenerate point where the Hölder
    exponent is sharp.
    """
    if not 1.0 < m <= 2.0:
        raise ValueError(f"m must lie in (1, 2], got {m!r}")
    if ground_truth is None:
        ground_truth = default_monomial_truth(dimension)
    if ball_radius is None:
        ball_radius = 0.25
    space = space or SpaceGeometry(dimension, 2.0)
    if space.dimension != dimension:
        raise ValueError(f"space has dimension {space.dimension}, expected {dimension}")
    prob = MonomialProblem(m, ground_truth, ball_radius, space)
    if constants is None:
        if not space.is_hilbert or np.any(space.weights != 1.0):
            raise ValueError("analytic constants are derived for unweighted l^2 only; pass constants=")
        constants = monomial_constants(m, prob.ground_truth, ball_radius)
    prob.constants = constants
    return prob


# --- resistor networks ----------------------------------------------------


def _check_edges(n_nodes, edges):
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    if edges.size == 0:
        raise StructuralError("network has no edges")
    if np.any(edges < 0) or np.any(edges >= n_nodes):
        raise StructuralError("edge endpoint out of range")
    if np.any(edges[:, 0] == edges[:, 1]):
        raise StructuralError("self-loop edges carry no current")
    return edges


def graph_laplacian(n_nodes, edges, sigma):
    """Weighted graph Laplacian ``sum_e sigma_e g_e g_e^T``."""
    L = np.zeros((n_nodes, n_nodes))
    a, b = edges[:, 0], edges[:, 1]
    np.add.at(L, (a, a), sigma)
    np.add.at(L, (b, b), sigma)
    np.add.at(L, (a, b), -sigma)
    np.add.at(L, (b, a), -sigma)
    return L


class ResistorNetworkProblem(ForwardProblem):
    """Edge conductances to the boundary Dirichlet-to-Neumann matrix.

    Nodes ``0 .. boundary_nodes-1`` are boundary nodes, the rest interior.
    The DtN matrix is the Schur complement of the Laplacian onto the
    boundary, flattened row-major into the data vector.
    """

    kind = "resistor_network"

    def __init__(self, boundary_nodes, interior_nodes, edges, sigma_truth, ball_radius):
        if boundary_nodes < 2 or interior_nodes < 1:
            raise StructuralError("need at least two boundary nodes and one interior node")
        self.boundary_nodes = int(boundary_nodes)
        self.interior_nodes = int(interior_nodes)
        self.n_nodes = self.boundary_nodes + self.interior_nodes
        self.edges = _check_edges(self.n_nodes, edges)
        adj = coo_matrix(
            (np.ones(len(self.edges)), (self.edges[:, 0], self.edges[:, 1])),
            shape=(self.n_nodes, self.n_nodes),
        )
        n_comp, _ = connected_components(adj, directed=False)
        if n_comp != 1:
            raise StructuralError(f"network graph is disconnected ({n_comp} components)")
        sigma_truth = np.asarray(sigma_truth, dtype=float).reshape(-1)
        if sigma_truth.size != len(self.edges):
            raise ValueError(f"expected {len(self.edges)} conductances, got {sigma_truth.size}")
        space = SpaceGeometry(len(self.edges), 2.0)
        super().__init__(space, self.boundary_nodes**2, sigma_truth, ball_radius)

    def _check_sigma(self, sigma):
        sigma = self.domain_space.check(sigma)
        if np.any(sigma <= 0):
            raise ValueError("conductances must be positive")
        return sigma

    def _extension(self, sigma):
        """Laplacian and harmonic extension ``P`` (nodes x boundary)."""
        b = self.boundary_nodes
        L = graph_laplacian(self.n_nodes, self.edges, sigma)
        X = np.linalg.solve(L[b:, b:], L[b:, :b])
        P = np.vstack([np.eye(b), -X])
        return L, P

    def dtn(self, sigma) -> np.ndarray:
        sigma = self._check_sigma(sigma)
        L, P = self._extension(sigma)
        b = self.boundary_nodes
        return L[:b, :b] + L[:b, b:] @ P[b:]

    def apply(self, sigma):
        return self.dtn(sigma).reshape(-1)

    def jacobian(self, sigma):
        # dS[dsigma] = sum_e dsigma_e h_e h_e^T with h_e the boundary-response
        # potential drop across edge e
        sigma = self._check_sigma(sigma)
        _, P = self._extension(sigma)
        H = P[self.edges[:, 0]] - P[self.edges[:, 1]]
        return np.einsum("ei,ej->ije", H, H).reshape(self.boundary_nodes**2, len(self.edges))


def dtn_map(boundary_nodes, interior_nodes, edges, sigma):
    """Dirichlet-to-Neumann matrix of a resistor network."""
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    n = boundary_nodes + interior_nodes
    edges = _check_edges(n, edges)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("conductances must be positive")
    L = graph_laplacian(n, edges, sigma)
    b = boundary_nodes
    if interior_nodes == 0:
        return L
    return L[:b, :b] - L[:b, b:] @ np.linalg.solve(L[b:, b:], L[b:, :b])


def make_resistor_network(
    boundary_nodes,
    interior_nodes,
    edges,
    sigma_truth,
    ball_radius=None,
    seed=0,
    sample_count=200,
):
    """Resistor-network problem with sampled constants on a conductance ball.

    ``L_hat``, ``L`` and ``C_F`` (eps = 1) are maxima over seeded samples in
    the l^2 ball of radius ``ball_radius`` around ``sigma_truth``, inflated
    by :data:`SAMPLED_CONSTANT_MARGIN`. When the Jacobian at the truth has
    deficient column rank the conductances are not identifiable from the
    DtN map and no constants are declared.
    """
    sigma_truth = np.asarray(sigma_truth, dtype=float)
    if np.any(sigma_truth <= 0):
        raise ValueError("conductances must be positive")
    if ball_radius is None:
        ball_radius = 0.1 * float(sigma_truth.min())
    if not 0 < ball_radius < sigma_truth.min():
        raise ValueError("ball_radius must be positive and keep every conductance positive")
    prob = ResistorNetworkProblem(boundary_nodes, interior_nodes, edges, sigma_truth, ball_radius)
    J = prob.jacobian(prob.ground_truth)
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0] or J.shape[0] < J.shape[1]:
        log.warning("network conductances are not identifiable from the DtN map; no constants declared")
        return prob
    prob.constants = _sampled_constants(prob, np.random.default_rng(seed), sample_count)
    return prob


def _sampled_constants(prob, rng, count):
    R = prob.ball_radius
    centre = prob.ground_truth
    pts = centre + uniform_ball(rng, count, centre.size, R)
    lhat = max(derivative_norm(prob, u) for u in np.vstack([centre, pts]))
    # misfit >= min sigma_min(F') ||u1 - u2|| along any segment in the ball,
    # which random pair directions alone rarely resolve
    smin = min(np.linalg.svd(prob.jacobian(u), compute_uv=False)[-1] for u in np.vstack([centre, pts]))
    lip = 0.0
    cf_sq = 0.0
    space = prob.domain_space
    others = centre + uniform_ball(rng, count, centre.size, R)
    # anchored pairs at several scales plus uniform pairs
    radii = R * 10.0 ** rng.uniform(-3, 0, size=count)
    anchored = centre + direction_samples(rng, count, centre.size) * radii[:, None]
    for u1, u2 in zip(np.vstack([pts, anchored]), np.vstack([others, np.broadcast_to(centre, anchored.shape)])):
        d = space.norm(u1 - u2)
        if d == 0:
            continue
        diff = prob.jacobian(u1) - prob.jacobian(u2)
        lip = max(lip, float(np.linalg.norm(diff, 2)) / d)
        misfit = prob.range_space.norm(prob.apply(u1) - prob.apply(u2))
        cf_sq = max(cf_sq, space.bregman(u1, u2) / misfit**2)
    cf_sq = max(cf_sq, 0.5 / smin**2)
    m = SAMPLED_CONSTANT_MARGIN
    return ProblemConstants(
        lipschitz_L=m * lip,
        deriv_bound_Lhat=m * lhat,
        stability_CF=m * math.sqrt(cf_sq),
        stability_eps=1.0,
    )


DEFAULT_NETWORK = {
    "boundary_nodes": 5,
    "interior_nodes": 2,
    "edges": [(0, 5), (1, 5), (2, 5), (2, 6), (3, 6), (4, 6), (5, 6)],
    "sigma_truth": [1.0, 1.2, 0.8, 1.1, 0.9, 1.3, 1.0],
}


def make_default_network(**kwargs):
    """The shipped seven-edge network with five boundary electrodes."""
    return make_resistor_network(**{**DEFAULT_NETWORK, **kwargs})


# --- sampling helpers -----------------------------------------------------


def direction_samples(rng, count, dim):
    """Unit vectors uniformly distributed on the Euclidean sphere."""
    g = rng.standard_normal((count, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def uniform_ball(rng, count, dim, radius):
    """Offsets uniformly distributed in the Euclidean ball of given radius."""
    r = radius * rng.random(count) ** (1.0 / dim)
    return direction_samples(rng, count, dim) * r[:, None]


def sample_bregman_ball(space, centre, u0, rho_sq, count, rng):
    """Points ``u`` with ``D^{u0}(centre, u) <= rho_sq``, uniform in the ball.

    Proposals are uniform in a Euclidean ball containing the norm ball of
    radius ``(p rho_sq / C_p)^(1/p)``; in the Hilbert case no proposal is
    rejected.
    """
    centre = space.check(centre)
    if space.is_hilbert and np.all(space.weights == 1.0):
        return centre + uniform_ball(rng, count, space.dimension, math.sqrt(2.0 * rho_sq))
    R = space.norm_ball_radius(rho_sq)
    # Euclidean radius covering the weighted l^r ball of radius R
    wmin = float(space.weights.min())
    euclid = R * wmin ** (-1.0 / space.r) * space.dimension ** max(0.0, 0.5 - 1.0 / space.r)
    out = []
    while len(out) < count:
        for u in centre + uniform_ball(rng, 4 * count, space.dimension, euclid):
            if space.shifted_bregman(centre, u, u0) <= rho_sq:
                out.append(u)
                if len(out) == count:
                    break
    return np.array(out)


# --- oracles --------------------------------------------------------------


def derivative_norm(problem, u) -> float:
    """Operator norm of ``F'(u)`` between the weighted l^2 spaces."""
    J = problem.jacobian(u)
    return float(np.linalg.norm(_weighted(problem, J), 2))


def _weighted(problem, A):
    if problem.domain_space.r != 2.0:
        raise ValueError("operator norms are computed for l^2 domains only")
    wu = np.sqrt(problem.domain_space.weights)
    wv = np.sqrt(problem.range_space.weights)
    return wv[:, None] * A / wu[None, :]


def derivative_lipschitz_ratio(problem, u1, u2) -> float:
    """``||F'(u1) - F'(u2)|| / ||u1 - u2||``."""
    A = problem.jacobian(u1) - problem.jacobian(u2)
    return float(np.linalg.norm(_weighted(problem, A), 2)) / problem.domain_space.norm(np.subtract(u1, u2))


@dataclass(frozen=True)
class DerivativeCheck:
    max_error: float
    checked: int
    skipped: int


def finite_difference_check(problem, u, directions, step, seed=0) -> DerivativeCheck:
    """Central-difference test of ``F'(u) h`` over random unit directions."""
    if step <= 0:
        raise ValueError("step must be positive")
    space = problem.domain_space
    u = space.check(u)
    rng = np.random.default_rng(seed)
    worst, skipped = 0.0, 0
    for h in rng.standard_normal((directions, space.dimension)):
        h = h / space.norm(h)
        exact = problem.apply_derivative(u, h)
        scale = problem.range_space.norm(exact)
        if scale == 0.0:
            skipped += 1
            continue
        fd = (problem.apply(u + step * h) - problem.apply(u - step * h)) / (2.0 * step)
        worst = max(worst, problem.range_space.norm(fd - exact) / scale)
    return DerivativeCheck(worst, directions - skipped, skipped)


def adjoint_mismatch(problem, u, h, w) -> float:
    """Relative gap ``|<F'(u)h, w> - <h, F'(u)^* w>|`` scaled by ``||F'(u)h|| ||w||_*``."""
    Jh = problem.apply_derivative(u, h)
    lhs = problem.range_space.pairing(Jh, w)
    rhs = problem.domain_space.pairing(h, problem.apply_adjoint(u, w))
    scale = problem.range_space.norm(Jh) * problem.range_space.dual_norm(w)
    if scale == 0.0:
        return abs(lhs - rhs)
    return abs(lhs - rhs) / scale


# --- stability fit --------------------------------------------------------


@dataclass(frozen=True)
class StabilityFit:
    fitted_cf: float
    fitted_eps: float
    regression_slope: float
    sample_count: int
    residual_rms: float
    bregman: np.ndarray = field(repr=False, compare=False)
    misfit: np.ndarray = field(repr=False, compare=False)


def estimate_stability(problem, sample_count, seed, ball_radius, u0=None) -> StabilityFit:
    """Fit the Hölder exponent and constant of the stability estimate.

    Points ``u = u_dag + t d`` are drawn with uniform directions and
    log-uniform radii ``t`` in ``[ball_radius/1000, ball_radius]`` so that the
    log-log regression of ``D^{u0}(u_dag, u)`` against ``||F(u) - F(u_dag)||``
    sees several scales. ``fitted_cf`` is the smallest constant for which
    the fitted estimate holds on every retained sample.
    """
    space = problem.domain_space
    p = space.p
    u_dag = problem.ground_truth
    u0 = space.zeros() if u0 is None else space.check(u0)
    rng = np.random.default_rng(seed)
    radii = float(ball_radius) * 10.0 ** rng.uniform(-3, 0, size=sample_count)
    pts = u_dag + direction_samples(rng, sample_count, space.dimension) * radii[:, None]
    breg = np.array([space.shifted_bregman(u_dag, u, u0) for u in pts])
    misfit = np.array([problem.range_space.norm(problem.apply(u) - problem.data) for u in pts])
    keep = (misfit > 1e-14) & (breg > 1e-14)
    if keep.sum() < 5:
        raise SamplingError("stability samples are degenerate (residuals below 1e-14)")
    fit = convergence_slope(misfit[keep], breg[keep])
    slope = fit.slope
    cf = float(np.max(breg[keep] / misfit[keep] ** slope)) ** (1.0 / p)
    return StabilityFit(
        fitted_cf=cf,
        fitted_eps=2.0 * slope / p - 1.0,
        regression_slope=slope,
        sample_count=int(keep.sum()),
        residual_rms=fit.residual_rms,
        bregman=breg,
        misfit=misfit,
    )
