"""Built-in invariant suites run by ``irlandweber verify``.

Each suite returns a list of ``(check name, passed, detail)`` tuples. Sample
sizes are smaller than in the acceptance tests so the whole run stays quick.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import problems as pr
from .analysis import check_envelope, check_recursion
from .config import ConfigError, load_config
from .constants import InfeasibleError, ProblemConstants, beta_admissible_max, kappa_p, mu_max, rho_squared
from .experiment import HypothesisError, build_experiment
from .geometry import SpaceGeometry, estimate_convexity_constants, sample_pairs
from .solver import solve

CONFIG_DIR = Path(__file__).with_name("configs")


def _geometry():
    rng = np.random.default_rng(1)
    out = []
    for p in (1.5, 2.0, 3.0, 4.0):
        for n in (1, 2, 10, 100):
            sp = SpaceGeometry(n, p, needs_constants=False)
            worst = 0.0
            for u in rng.standard_normal((50, n)):
                back = sp.inverse_duality_map(sp.duality_map(u))
                worst = max(worst, np.linalg.norm(back - u) / np.linalg.norm(u))
            out.append((f"duality round trip p={p:g} n={n}", worst <= 1e-10, f"max rel err {worst:.2e}"))
    return out


def _bregman():
    out = []
    for p in (1.5, 3.0, 4.0):
        bare = SpaceGeometry(3, p, needs_constants=False)
        c_p, g_q = estimate_convexity_constants(bare, 10_000, 0)
        sp = SpaceGeometry(3, p, c_p=c_p, g_q=g_q)
        a, b = sample_pairs(sp, 5000, np.random.default_rng(7))
        bad = 0
        for x, y in zip(a, b):
            d = sp.norm(x - y)
            dd = sp.dual_norm(x - y)
            lo = c_p / p * d**p
            hi = g_q / sp.q * dd**sp.q
            bad += sp.bregman(x, y) < lo * (1 - 1e-9)
            bad += sp.dual_bregman(x, y) > hi * (1 + 1e-9)
        rate = bad / (2 * len(a))
        out.append((f"bregman estimates p={p:g}", rate <= 1e-3, f"violation rate {rate:.2e}"))
    hil = SpaceGeometry(4, 2.0)
    a, b = sample_pairs(hil, 500, np.random.default_rng(3))
    ok = all(
        abs(hil.bregman(x, y) - 0.5 * np.sum((x - y) ** 2)) <= 1e-12 * max(1.0, np.sum((x - y) ** 2))
        for x, y in zip(a, b)
    )
    out.append(("bregman hilbert exact", ok, ""))
    return out


def _shipped_problems():
    return [
        pr.make_diagonal_linear(4, [1.0, 0.8, 0.6, 0.5]),
        pr.make_monomial(4, 1.5),
        pr.make_default_network(),
    ]


def _oracles():
    out = []
    rng = np.random.default_rng(11)
    for prob in _shipped_problems():
        sp = prob.domain_space
        R = prob.ball_radius if np.isfinite(prob.ball_radius) else 1.0
        worst_fd, worst_adj = 0.0, 0.0
        for _ in range(20):
            u = prob.ground_truth + pr.uniform_ball(rng, 1, sp.dimension, 0.9 * R)[0]
            worst_fd = max(worst_fd, pr.finite_difference_check(prob, u, 5, 1e-5, int(rng.integers(1 << 30))).max_error)
            h = rng.standard_normal(sp.dimension)
            w = rng.standard_normal(prob.range_space.dimension)
            worst_adj = max(worst_adj, pr.adjoint_mismatch(prob, u, h, w))
        out.append((f"finite differences {prob.kind}", worst_fd <= 1e-5, f"{worst_fd:.2e}"))
        out.append((f"adjoint identity {prob.kind}", worst_adj <= 1e-10, f"{worst_adj:.2e}"))
    return out


def _constants():
    hil = SpaceGeometry(1, 2.0)
    pc = ProblemConstants(1.0, 1.0, 1.0, 1.0)
    out = [
        ("kappa_p(2)", abs(kappa_p(2.0) - 5.2088) <= 5e-4, f"{kappa_p(2.0):.6f}"),
        ("mu_max hilbert", abs(mu_max(hil, pc) - 0.5) <= 1e-15, f"{mu_max(hil, pc)!r}"),
        ("rho_squared hilbert", abs(rho_squared(hil, pc) - 0.125) <= 1e-15, f"{rho_squared(hil, pc)!r}"),
    ]
    # C_p = 5 exceeds what any norm allows; the formula is exercised directly
    fake = SpaceGeometry(1, 2.0, c_p=5.0, g_q=1.0)
    out.append(("beta_admissible_max", abs(beta_admissible_max(fake) - 0.375) <= 1e-15, ""))
    try:
        beta_admissible_max(hil)
        out.append(("beta_admissible_max infeasible for C_p <= p", False, ""))
    except InfeasibleError:
        out.append(("beta_admissible_max infeasible for C_p <= p", True, ""))
    return out


def _network():
    rng = np.random.default_rng(5)
    S = pr.dtn_map(2, 1, [(0, 2), (1, 2)], [1.0, 1.0])
    out = [("path graph DtN", np.array_equal(S, [[0.5, -0.5], [-0.5, 0.5]]), "")]
    worst = 0.0
    for _ in range(20):
        b = int(rng.integers(2, 6))
        i = int(rng.integers(1, 6))
        edges = random_connected_edges(rng, b + i)
        S = pr.dtn_map(b, i, edges, rng.uniform(0.5, 2.0, len(edges)))
        worst = max(worst, np.abs(S - S.T).max(), np.abs(S.sum(axis=1)).max())
    out.append(("DtN symmetry and conservation", worst <= 1e-12, f"{worst:.2e}"))
    return out


def random_connected_edges(rng, n_nodes, extra=None):
    """Random spanning tree plus a few extra edges, as an edge list."""
    order = rng.permutation(n_nodes)
    edges = {tuple(sorted((int(order[k]), int(order[rng.integers(k)])))) for k in range(1, n_nodes)}
    extra = int(rng.integers(0, n_nodes)) if extra is None else extra
    for _ in range(extra):
        a, b = rng.choice(n_nodes, 2, replace=False)
        edges.add(tuple(sorted((int(a), int(b)))))
    return sorted(edges)


def _configs(config_dir=None):
    out = []
    root = Path(config_dir) if config_dir else CONFIG_DIR
    paths = [root] if root.is_file() else sorted(root.glob("*.ini"))
    for path in paths:
        try:
            cfg = load_config(path)
        except ConfigError as exc:
            out.append((f"config {path.name}", False, str(exc)))
            continue
        if cfg.get("analysis", "mode") == "estimate":
            continue
        try:
            exp = build_experiment(cfg)
        except (ConfigError, HypothesisError, InfeasibleError) as exc:
            out.append((f"config {path.name}", False, str(exc)))
            continue
        trace = solve(exp.problem, exp.space, exp.solver, exp.rate)
        gamma = trace.gamma
        mono = bool(np.all(np.diff(gamma) <= 1e-12))
        in_ball = all(r.in_ball for r in trace.records)
        rec = check_recursion(trace, exp.rate)
        env = check_envelope(trace, exp.rate)
        out.append((f"{path.stem} monotone", mono, f"max increase {np.max(np.diff(gamma), initial=0):.2e}"))
        out.append((f"{path.stem} in ball", in_ball, ""))
        out.append((f"{path.stem} converged", gamma[-1] < 1e-8, f"final gamma {gamma[-1]:.2e}"))
        out.append((f"{path.stem} recursion", rec.passed, f"min slack {rec.min_slack:.2e}"))
        out.append((f"{path.stem} envelope", env.passed, f"max ratio {env.max_ratio:.2e}"))
    return out


SUITES = {
    "geometry": _geometry,
    "bregman": _bregman,
    "oracles": _oracles,
    "constants": _constants,
    "network": _network,
    "configs": _configs,
}


def run_suites(names=None, config_dir=None):
    """Run the named suites (all by default); returns ``{suite: [(check, ok, detail)]}``."""
    names = list(SUITES) if not names else names
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s) {unknown}; choose from {sorted(SUITES)}")
    results = {}
    for name in names:
        results[name] = SUITES[name](config_dir) if name == "configs" else SUITES[name]()
    return results
