"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line in ``RESULTS``; the conftest hook prints
them at the end of the session. Run directly with
``python tests/test_acceptance.py`` for the same report.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from irlandweber import problems as pr
from irlandweber.analysis import (
    check_envelope,
    check_eps0,
    check_order,
    check_recursion,
    product_bound_eps1,
    smoothness_constant,
)
from irlandweber.cli import main
from irlandweber.config import load_config
from irlandweber.constants import ProblemConstants, beta_admissible_max, kappa_p, mu_max, rho_squared
from irlandweber.experiment import build_experiment, run_experiment
from irlandweber.geometry import SpaceGeometry, convexity_ratios, estimate_convexity_constants, sample_pairs
from irlandweber.solver import IterationTrace, SolverConfig, TraceRecord, solve
from irlandweber.verify import random_connected_edges

import reference as ref

CONFIGS = Path(__file__).resolve().parents[1] / "src" / "irlandweber" / "configs"
RUN_CONFIGS = ("diag_hilbert", "monomial_m1_5", "monomial_m2", "resistor_network")

RESULTS = {}


def record(n, title, ok, detail=""):
    RESULTS[n] = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(RESULTS[n])
    assert ok, RESULTS[n]


@pytest.fixture(scope="module")
def shipped_runs():
    out = {}
    t0 = time.perf_counter()
    for name in RUN_CONFIGS:
        exp = build_experiment(load_config(CONFIGS / f"{name}.ini"))
        out[name] = run_experiment(exp)
    out["_elapsed"] = time.perf_counter() - t0
    return out


def test_c01_duality_round_trip():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst = 0.0
    for p in (1.5, 2.0, 3.0, 4.0):
        for n in (1, 2, 10, 100):
            sp = SpaceGeometry(n, p, needs_constants=False)
            U = rng.standard_normal((10_000, n))
            back = sp.inverse_duality_map_rows(sp.duality_map_rows(U))
            rel = np.linalg.norm(back - U, axis=1) / np.linalg.norm(U, axis=1)
            worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 5.0
    record(1, "duality round trip", ok, f"max rel err {worst:.2e}, {elapsed:.2f} s")


def test_c02_bregman_inequalities():
    t0 = time.perf_counter()
    worst_rate = 0.0
    for p in (1.5, 3.0, 4.0):
        for n in (2, 3, 10):
            bare = SpaceGeometry(n, p, needs_constants=False)
            c_p, g_q = estimate_convexity_constants(bare, 10_000, seed=0)
            sp = SpaceGeometry(n, p, c_p=c_p, g_q=g_q)
            a, b = sample_pairs(sp, 10_000, np.random.default_rng(1))
            primal, dual = convexity_ratios(sp, a, b)
            low = np.mean(primal < c_p * (1 - 1e-9))
            high = np.mean(dual > g_q * (1 + 1e-9))
            worst_rate = max(worst_rate, float(low), float(high))
    hil = SpaceGeometry(5, 2.0)
    a, b = sample_pairs(hil, 10_000, np.random.default_rng(2))
    primal, dual = convexity_ratios(hil, a, b)
    hil_err = float(max(np.nanmax(np.abs(primal - 1.0)), np.nanmax(np.abs(dual - 1.0))))
    elapsed = time.perf_counter() - t0
    ok = worst_rate <= 1e-3 and hil_err <= 1e-9 and elapsed < 10.0
    record(2, "Bregman inequalities", ok,
           f"worst violation rate {worst_rate:.1e}, hilbert dev {hil_err:.1e}, {elapsed:.2f} s")


def test_c03_derivative_adjoint_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    fd_worst, adj_worst = {}, {}
    problems = {
        "diagonal": pr.make_diagonal_linear(4, [1.0, 0.8, 0.6, 0.5]),
        "monomial": pr.make_monomial(4, 1.5),
        "network": pr.make_default_network(),
    }
    for name, prob in problems.items():
        sp = prob.domain_space
        R = prob.ball_radius if math.isfinite(prob.ball_radius) else 1.0
        fd, adj = 0.0, 0.0
        for _ in range(1000):
            u = prob.ground_truth + pr.uniform_ball(rng, 1, sp.dimension, 0.95 * R)[0]
            chk = pr.finite_difference_check(prob, u, 1, 1e-6, int(rng.integers(1 << 31)))
            fd = max(fd, chk.max_error)
            h = rng.standard_normal(sp.dimension)
            w = rng.standard_normal(prob.range_space.dimension)
            adj = max(adj, pr.adjoint_mismatch(prob, u, h, w))
        fd_worst[name], adj_worst[name] = fd, adj
    elapsed = time.perf_counter() - t0
    ok = max(fd_worst.values()) <= 1e-5 and max(adj_worst.values()) <= 1e-10 and elapsed < 30.0
    detail = ", ".join(f"{k} fd {fd_worst[k]:.1e} adj {adj_worst[k]:.1e}" for k in problems)
    record(3, "derivative/adjoint oracles", ok, f"{detail}, {elapsed:.2f} s")


def test_c04_stability_fit():
    t0 = time.perf_counter()
    cases = [
        ("diagonal", pr.make_diagonal_linear(4, [1.0, 0.8, 0.6, 0.5]), 1.0, 1.0),
        ("network", pr.make_default_network(), 1.0, 0.08),
    ]
    for m in (1.25, 1.5, 1.75):
        # the Hölder exponent 2/m - 1 is attained at the degenerate point u = 0
        prob = pr.make_monomial(4, m, ground_truth=np.zeros(4), ball_radius=0.25)
        cases.append((f"monomial m={m:g}", prob, 2.0 / m - 1.0, 0.25))
    errs = {}
    for name, prob, target, radius in cases:
        fit = pr.estimate_stability(prob, 500, 0, radius)
        errs[name] = (fit.fitted_eps, abs(fit.fitted_eps - target))
    elapsed = time.perf_counter() - t0
    ok = max(e for _, e in errs.values()) <= 0.1 and elapsed < 30.0
    detail = ", ".join(f"{k} {v:.3f}" for k, (v, _) in errs.items())
    record(4, "stability fit", ok, f"fitted eps {detail}, {elapsed:.2f} s")


def test_c05_monotone_descent_ball(shipped_runs):
    rows = []
    ok = shipped_runs["_elapsed"] < 60.0
    for name in RUN_CONFIGS:
        exp, trace = shipped_runs[name].experiment, shipped_runs[name].trace
        assert abs(exp.solver.mu - 0.9 * exp.step_bound) <= 1e-15 * exp.step_bound
        g = trace.gamma
        mono = bool(np.all(np.diff(g) <= 1e-12))
        ball = all(r.in_ball for r in trace.records)
        conv = bool(g[-1] < 1e-8) and len(trace) - 1 <= 10_000
        ok = ok and mono and ball and conv
        rows.append(f"{name} k={len(trace) - 1} gamma={g[-1]:.1e}")
    record(5, "monotone descent + ball invariance", ok,
           f"{'; '.join(rows)}, {shipped_runs['_elapsed']:.2f} s")


def test_c06_recursion_bound(shipped_runs):
    rows, ok = [], True
    for name in RUN_CONFIGS:
        res = shipped_runs[name]
        chk = check_recursion(res.trace, res.experiment.rate)
        ok = ok and chk.min_slack >= -1e-12
        rows.append(f"{name} {chk.min_slack:.1e}")
    m2 = shipped_runs["monomial_m2"]
    eps0 = check_eps0(m2.trace, m2.experiment.rate)
    ok = ok and eps0.min_slack >= -1e-12
    record(6, "recursion bound", ok, f"min slack {', '.join(rows)}; eps=0 run {eps0.min_slack:.1e}")


def test_c07_rate_envelope(shipped_runs):
    rows, ok = [], True
    for name in RUN_CONFIGS:
        res = shipped_runs[name]
        env = check_envelope(res.trace, res.experiment.rate)
        if env.smoothness_ok:
            ok = ok and env.passed
            rows.append(f"{name} {env.kind} ratio {env.max_ratio:.1e}{'' if env.meaningful else ' (vacuous)'}")
        else:
            rows.append(f"{name} skipped (no finite C)")
    # eps = 1 product bound on the diagonal problem, zero schedule so C = 0
    diag = shipped_runs["diag_hilbert"].experiment
    cfg = SolverConfig(mu=diag.solver.mu, u0=diag.solver.u0, max_iterations=10_000,
                       gamma_tolerance=1e-10, rho_sq=diag.solver.rho_sq)
    trace = solve(diag.problem, diag.space, cfg, diag.rate)
    rc = diag.rate
    pb = product_bound_eps1(rc.alpha(trace.beta[:-1]), rc.k2, rc.k5, smoothness_constant(trace.beta, trace.gamma),
                            rc.rho_sq)
    ratio = float(np.max(trace.gamma[1:] / pb.bound[1:]))
    ok = ok and ratio <= 1 + 1e-9 and pb.meaningful
    record(7, "rate envelope", ok, f"{'; '.join(rows)}; diagonal zero-schedule product ratio {ratio:.3f}")


def _synthetic(gamma, beta):
    recs = [TraceRecord(k, b, g, 0.0, 0.0, True, math.nan, math.nan) for k, (g, b) in enumerate(zip(gamma, beta))]
    return IterationTrace(recs, "max_iterations")


def test_c08_order_check(shipped_runs):
    q, theta = 2.0, 0.9
    beta = 0.1 * theta ** np.arange(300)
    oc = check_order(_synthetic(0.25 * beta ** (q - 1), beta), q)
    eta_dev = float(np.max(np.abs(oc.eta / oc.eta[0] - 1)))
    ok = abs(oc.fitted_slope - (q - 1)) <= 0.02 and eta_dev <= 1e-9
    rows = []
    for name in RUN_CONFIGS:
        res = shipped_runs[name]
        tr = res.trace
        if not np.all(tr.beta > 0):
            continue
        real = check_order(tr, res.experiment.space.q, res.experiment.rate)
        if real.all_flags_hold:
            ok = ok and real.fitted_slope >= q - 1 - 0.15
        rows.append(f"{name} flags {int(real.flags.sum())}/{real.flags.size} slope {real.fitted_slope:.2f}")
    record(8, "order check", ok,
           f"synthetic slope {oc.fitted_slope:.4f}, eta dev {eta_dev:.1e}; {'; '.join(rows)}")


def test_c09_landweber_reduction():
    problems = [pr.make_diagonal_linear(4, [1.0, 0.8, 0.6, 0.5]), pr.make_monomial(4, 1.5), pr.make_default_network()]
    ok, rows = True, []
    for prob in problems:
        sp = prob.domain_space
        u0 = prob.ground_truth + 0.02 * np.where(np.arange(sp.dimension) % 2, -1.0, 1.0)
        trace = solve(prob, None, SolverConfig(mu=0.3, u0=u0, max_iterations=100))
        us = ref.landweber_hilbert(prob, u0, 0.3, 100)
        same = np.array_equal(trace.final_iterate, us[-1]) and np.array_equal(
            trace.gamma, [sp.shifted_bregman(prob.ground_truth, u, u0) for u in us]
        )
        ok = ok and same and len(trace) == 101
        rows.append(f"{prob.kind} {'identical' if same else 'differs'}")
    record(9, "Landweber reduction", ok, ", ".join(rows))


def test_c10_constant_pins():
    s3 = math.sqrt(3.0)
    by_hand = 4 * (2 + s3) * (1 - 1 / (1 + 2 * (2 - s3)))
    kp = kappa_p(2.0)
    hil = SpaceGeometry(1, 2.0)
    pc = ProblemConstants(1.0, 1.0, 1.0, 1.0)
    mm = mu_max(hil, pc)
    rs = rho_squared(hil, pc)
    ba = beta_admissible_max(SpaceGeometry(1, 2.0, c_p=5.0, g_q=1.0))
    ok = (
        abs(kp - 5.2088) <= 5e-4
        and abs(kp - by_hand) <= 1e-13
        and mm == 0.5
        and rs == 0.125
        and abs(ba - 0.375) <= 1e-15
    )
    record(10, "constants pins", ok, f"kappa_p(2)={kp:.6f} mu_max={mm} rho_sq={rs} beta_adm={ba}")


def test_c11_resistor_dtn():
    S = pr.dtn_map(2, 1, [(0, 2), (1, 2)], [1.0, 1.0])
    exact = bool(np.array_equal(S, [[0.5, -0.5], [-0.5, 0.5]]))
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(3, 13))
        b = int(rng.integers(2, n))
        edges = random_connected_edges(rng, n)
        S = pr.dtn_map(b, n - b, edges, rng.uniform(0.1, 5.0, len(edges)))
        worst = max(worst, float(np.abs(S - S.T).max()), float(np.abs(S.sum(axis=1)).max()))
    record(11, "resistor network DtN", exact and worst <= 1e-12,
           f"path graph {'exact' if exact else 'wrong'}, worst asym/row-sum {worst:.1e}")


def test_c12_determinism(tmp_path):
    same = True
    names = []
    for name in RUN_CONFIGS:
        outs = []
        for rep in range(2):
            out = tmp_path / f"{name}_{rep}"
            main(["run", "--config", str(CONFIGS / f"{name}.ini"), "--out", str(out), "--seed", "5"])
            outs.append(out)
        for f in ("trace.csv", "analysis.csv", "summary.txt", "resolved_config.ini"):
            same = same and (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
        names.append(name)
    outs = []
    for rep in range(2):
        out = tmp_path / f"fit_{rep}"
        main(["estimate", "--config", str(CONFIGS / "monomial_fit.ini"), "--out", str(out)])
        outs.append(out)
    for f in ("stability_fit.csv", "stability_summary.txt"):
        same = same and (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    c1 = estimate_convexity_constants(SpaceGeometry(3, 3.0, needs_constants=False), 2000, 4)
    c2 = estimate_convexity_constants(SpaceGeometry(3, 3.0, needs_constants=False), 2000, 4)
    same = same and c1 == c2
    record(12, "determinism", same, f"byte-identical artifacts for {', '.join(names)}, monomial_fit")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
