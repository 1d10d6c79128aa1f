"""Command-line entry point.

Exit codes: 0 success, 1 a check failed (or the run did not converge),
2 bad configuration or infeasible hypotheses.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from . import problems as pr
from .config import ConfigError, load_config, render_config
from .constants import (
    InfeasibleError,
    beta_admissible_max,
    kappa_p,
    mu_max,
    mu_max_eps0,
    rate_constants,
    rho_squared,
)
from .experiment import (
    HypothesisError,
    build_experiment,
    build_problem,
    build_space,
    problem_dimension,
    run_experiment,
)
from .verify import run_suites

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("irlandweber")


def _fmt(v):
    return format(float(v), ".17g") if isinstance(v, float) else str(v)


def _out_dir(args, cfg):
    if args.out:
        return Path(args.out)
    return Path(cfg.get("output", "directory") or Path("runs") / cfg.name)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    exp = build_experiment(cfg, args.seed, args.strict)
    out = _out_dir(args, cfg)
    result = run_experiment(exp, out)
    summary = result.report.summary if result.report else {}
    print(f"status={result.trace.status}")
    for key in ("iterations", "final_gamma", "min_slack", "recursion", "envelope", "order", "hypotheses"):
        if key in summary:
            print(f"{key}={_fmt(summary[key])}")
    print(f"output={out}")
    return result.exit_code


def _constants_table(cfg, seed, strict):
    space = build_space(cfg, problem_dimension(cfg), seed)
    problem = build_problem(cfg, space, seed)
    rows = {"p": space.p, "q": space.q, "c_p": space.c_p, "g_q": space.g_q, "kappa_p": kappa_p(space.p)}
    c = problem.constants
    if c is None:
        raise HypothesisError("the problem has no established constants; cannot tabulate")
    rows.update(
        L=float(c.lipschitz_L),
        L_hat=c.deriv_bound_Lhat,
        C_F=c.stability_CF,
        eps=c.stability_eps,
        mu_max=mu_max(space, c),
    )
    try:
        rows["mu_max_eps0"] = mu_max_eps0(space, c)
    except InfeasibleError:
        rows["mu_max_eps0"] = "INFEASIBLE"
    rows["rho_squared"] = rho_squared(space, c) if c.stability_eps > 0 else "UNDEFINED"
    try:
        rows["beta_admissible_max"] = beta_admissible_max(space)
    except InfeasibleError as exc:
        rows["beta_admissible_max"] = "INFEASIBLE"
        if strict:
            raise HypothesisError(f"monotonicity hypothesis p < C_p fails: {exc}") from None
    try:
        exp = build_experiment(cfg, seed, strict)
    except (ConfigError, HypothesisError) as exc:
        rows["run"] = f"unavailable ({exc})"
        return rows
    rows.update(mu=exp.solver.mu, rho_sq=exp.solver.rho_sq)
    if exp.rate is not None:
        rc = rate_constants(exp.space, c, exp.solver.mu, exp.solver.rho_sq)
        rows.update(K1=rc.k1, K2=rc.k2, K3=rc.k3, K4=rc.k4, K5=rc.k5, M1=rc.m1, t=rc.t)
    return rows


def cmd_check_constants(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.get("analysis", "seed") if args.seed is None else args.seed
    for key, value in _constants_table(cfg, seed, args.strict).items():
        print(f"{key}={_fmt(value)}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.get("analysis", "seed") if args.seed is None else args.seed
    space = build_space(cfg, problem_dimension(cfg), seed)
    problem = build_problem(cfg, space, seed)
    radius = cfg.get("analysis", "fit_radius")
    if radius is None:
        radius = problem.ball_radius if math.isfinite(problem.ball_radius) else 1.0
    if radius <= 0:
        raise pr.SamplingError("fit radius is zero; every sample coincides with the ground truth")
    fit = pr.estimate_stability(problem, cfg.get("analysis", "sample_count"), seed, radius)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "stability_fit.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("misfit", "bregman"))
        for m, b in zip(fit.misfit, fit.bregman):
            writer.writerow((_fmt(float(m)), _fmt(float(b))))
    rows = {
        "fitted_eps": fit.fitted_eps,
        "fitted_cf": fit.fitted_cf,
        "regression_slope": fit.regression_slope,
        "residual_rms": fit.residual_rms,
        "samples_used": fit.sample_count,
        "fit_radius": float(radius),
    }
    if problem.constants is not None:
        rows["declared_eps"] = problem.constants.stability_eps
    if cfg.get("space", "estimate_constants"):
        rows.update(c_p=space.c_p, g_q=space.g_q)
    with open(out / "stability_summary.txt", "w") as fh:
        for key, value in rows.items():
            line = f"{key}={_fmt(value)}"
            print(line)
            fh.write(line + "\n")
    (out / "resolved_config.ini").write_text(render_config(cfg.values))
    return EXIT_OK


def cmd_verify(args) -> int:
    suites = args.suite or None
    try:
        results = run_suites(suites, args.config)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    code = EXIT_OK
    for suite, checks in results.items():
        ok = all(passed for _, passed, _ in checks)
        print(f"[{'PASS' if ok else 'FAIL'}] suite {suite}")
        for name, passed, detail in checks:
            if not passed or args.verbose:
                print(f"    {'ok  ' if passed else 'FAIL'} {name} {detail}".rstrip())
        if not ok:
            code = EXIT_FAIL
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irlandweber", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment config (.ini)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--strict", action="store_true", help="treat infeasible hypotheses as errors")

    p = sub.add_parser("run", help="solve and analyze one experiment")
    common(p)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check-constants", help="tabulate the theory constants of a config")
    common(p)
    p.set_defaults(func=cmd_check_constants)

    p = sub.add_parser("estimate", help="fit the stability exponent by sampling")
    common(p)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("verify", help="run the built-in invariant suites")
    common(p, config_required=False)
    p.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true", help="list every check")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except (HypothesisError, InfeasibleError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
    except pr.SamplingError as exc:
        print(f"sampling error: {exc}", file=sys.stderr)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
