"""Build spaces, problems and solver settings from a parsed config, and run them."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import problems as pr
from .analysis import AnalysisReport, analyze
from .config import MU_AUTO_FRACTION, ExperimentConfig, render_config
from .constants import (
    InfeasibleError,
    ProblemConstants,
    RateConstants,
    beta_admissible_max,
    rate_constants,
    rho_squared,
    step_size_bound,
)
from .geometry import SpaceGeometry
from .solver import BetaSchedule, ConfigurationError, IterationTrace, SolverConfig, check_config, solve

log = logging.getLogger(__name__)


class HypothesisError(ValueError):
    """A standing hypothesis of the convergence theory fails for this config."""


@dataclass
class Experiment:
    """Everything resolved from a config, ready to run."""

    config: ExperimentConfig
    space: SpaceGeometry
    problem: pr.ForwardProblem
    solver: SolverConfig
    rate: RateConstants | None
    step_bound: float
    hypotheses_ok: bool
    notes: tuple = ()

    def resolved_values(self) -> dict:
        """Config values with every ``auto`` and derived quantity made explicit."""
        vals = {k: dict(v) for k, v in self.config.values.items()}
        sp = vals["space"]
        sp.update(p=self.space.p, r=self.space.r, c_p=self.space.c_p, g_q=self.space.g_q)
        sp["estimate_constants"] = False
        sp.pop("estimate_samples", None)
        if not np.all(self.space.weights == 1.0):
            sp["weights"] = list(self.space.weights)
        prob = vals["problem"]
        if "ground_truth" in prob or prob["kind"] != "resistor_network":
            prob["ground_truth"] = list(self.problem.ground_truth)
        if prob["kind"] == "resistor_network":
            prob["sigma_truth"] = list(self.problem.ground_truth)
            prob.pop("ground_truth", None)
        if math.isfinite(self.problem.ball_radius):
            prob["ball_radius"] = self.problem.ball_radius
        c = self.problem.constants
        vals["constants"] = {
            "lipschitz_L": float(c.lipschitz_L),
            "deriv_bound_Lhat": float(c.deriv_bound_Lhat),
            "stability_CF": float(c.stability_CF),
            "stability_eps": float(c.stability_eps),
        }
        s = vals["solver"]
        s["mu"] = self.solver.mu
        s["u0"] = list(self.solver.u0)
        s["rho_sq"] = self.solver.rho_sq
        s["beta_max"] = self.solver.schedule.beta_max
        return vals


def build_space(cfg: ExperimentConfig, dimension: int, seed: int) -> SpaceGeometry:
    sp = cfg.section("space")
    p, r, weights = sp["p"], sp.get("r"), sp.get("weights")
    try:
        if sp.get("estimate_constants"):
            return SpaceGeometry.with_estimated_constants(dimension, p, r, weights, sp["estimate_samples"], seed)
        return SpaceGeometry(dimension, p, r, weights, sp.get("c_p"), sp.get("g_q"))
    except ValueError as exc:
        raise cfg.error("space", None, str(exc)) from None


def problem_dimension(cfg):
    prob = cfg.section("problem")
    kind = prob["kind"]
    if kind == "diagonal":
        return len(prob["singular_values"])
    if kind == "monomial":
        return prob["dimension"]
    return len(prob.get("edges", pr.DEFAULT_NETWORK["edges"]))


def _override_constants(cfg):
    c = cfg.section("constants")
    if not c:
        return None
    try:
        return ProblemConstants(**c)
    except ValueError as exc:
        raise cfg.error("constants", None, str(exc)) from None


def build_problem(cfg: ExperimentConfig, space: SpaceGeometry, seed: int) -> pr.ForwardProblem:
    prob = cfg.section("problem")
    kind = prob["kind"]
    consts = _override_constants(cfg)
    truth = prob.get("ground_truth", "default")
    n = space.dimension
    try:
        if kind == "diagonal":
            gt = None if truth == "default" else (np.zeros(n) if truth == "zeros" else truth)
            return pr.make_diagonal_linear(n, prob["singular_values"], gt, space, consts)
        if kind == "monomial":
            gt = None if truth == "default" else (np.zeros(n) if truth == "zeros" else truth)
            return pr.make_monomial(n, prob["m"], gt, prob.get("ball_radius"), space, consts)
        if not space.is_hilbert or np.any(space.weights != 1.0):
            raise ValueError("resistor networks run in unweighted l^2 only")
        net = {**pr.DEFAULT_NETWORK}
        for key in ("boundary_nodes", "interior_nodes", "edges", "sigma_truth"):
            if key in prob:
                net[key] = prob[key]
        problem = pr.make_resistor_network(
            **net,
            ball_radius=prob.get("ball_radius"),
            seed=seed,
            sample_count=prob.get("sample_count", 200),
        )
        if consts is not None:
            problem.constants = consts
        return problem
    except (ValueError, pr.StructuralError) as exc:
        raise cfg.error("problem", None, str(exc)) from None


def resolve_rho_sq(cfg, space, problem, consts, gamma0=None) -> float:
    """Ball radius: explicit, or the smaller of the theory radius and the domain ball.

    When both are infinite (a linear problem on the whole space) the radius
    falls back to ``gamma0``, the initial error, so the ball still bounds
    the run.
    """
    val = cfg.get("solver", "rho_sq")
    if val != "auto":
        if not (val > 0 and math.isfinite(val)):
            raise cfg.error("solver", "rho_sq", "must be finite and positive")
        return float(val)
    if consts.stability_eps == 0.0:
        raise cfg.error("solver", "rho_sq", "eps = 0 has no closed-form ball radius; set rho_sq explicitly")
    theory = rho_squared(space, consts)
    domain = math.inf
    if math.isfinite(problem.ball_radius):
        domain = space.c_p / space.p * problem.ball_radius**space.p
    rho = min(theory, domain)
    if math.isfinite(rho):
        if rho <= 0:
            raise HypothesisError("the ball radius is zero (derivative not Lipschitz on the ball)")
        return rho
    if gamma0 is None or gamma0 <= 0:
        raise cfg.error("solver", "rho_sq", "cannot infer a finite ball radius; set rho_sq explicitly")
    return gamma0


def initial_guess(cfg, space, truth, rho_sq_hint=None):
    spec = cfg.get("solver", "u0")
    if spec == "zero":
        return space.zeros()
    if isinstance(spec, tuple):
        _, frac = spec
        if rho_sq_hint is None:
            raise cfg.error("solver", "u0", "truth_offset needs a finite ball radius")
        direction = np.where(np.arange(space.dimension) % 2 == 0, 1.0, -1.0)
        direction /= space.norm(direction)
        # D(x, 0) = ||x||^p / p, so this offset gives gamma_0 = frac * rho_sq
        radius = (space.p * frac * rho_sq_hint) ** (1.0 / space.p)
        return truth - radius * direction
    try:
        return space.check(spec)
    except ValueError as exc:
        raise cfg.error("solver", "u0", str(exc)) from None


def build_experiment(cfg: ExperimentConfig, seed: int | None = None, strict: bool = False) -> Experiment:
    """Resolve a config into an :class:`Experiment`.

    Raises :class:`~irlandweber.config.ConfigError`, :class:`HypothesisError`
    or :class:`~irlandweber.constants.InfeasibleError` for invalid input.
    """
    seed = cfg.get("analysis", "seed") if seed is None else seed
    space = build_space(cfg, problem_dimension(cfg), seed)
    problem = build_problem(cfg, space, seed)
    if problem.constants is None:
        raise HypothesisError(
            "the problem has no established constants (stability estimate unavailable; "
            "for a network the conductances are not identifiable)"
        )
    consts = problem.constants
    step_bound = step_size_bound(space, consts)
    s = cfg.section("solver")

    u0_spec = s["u0"]
    if isinstance(u0_spec, tuple):
        rho = resolve_rho_sq(cfg, space, problem, consts)
        u0 = initial_guess(cfg, space, problem.ground_truth, rho)
    else:
        u0 = initial_guess(cfg, space, problem.ground_truth)
        gamma0 = space.shifted_bregman(problem.ground_truth, u0, u0)
        rho = resolve_rho_sq(cfg, space, problem, consts, gamma0)

    mu = MU_AUTO_FRACTION * step_bound if s["mu"] == "auto" else s["mu"]
    notes = []
    hypotheses_ok = True
    beta_max = s["beta_max"]
    if s["schedule"] != "zero":
        try:
            beta_max = min(beta_max, beta_admissible_max(space))
        except InfeasibleError as exc:
            hypotheses_ok = False
            msg = f"monotonicity hypothesis p < C_p fails: {exc}"
            if strict:
                raise HypothesisError(msg) from None
            notes.append(msg)
            log.warning("%s; continuing with beta_max = %g", msg, beta_max)
    try:
        schedule = BetaSchedule(s["schedule"], s["beta_base"], s["beta_decay"], s["smoothness_C"], beta_max)
        solver = SolverConfig(
            mu=mu,
            u0=u0,
            schedule=schedule,
            variant=s["variant"],
            max_iterations=s["max_iterations"],
            residual_tolerance=s["residual_tolerance"],
            gamma_tolerance=s["gamma_tolerance"],
            rho_sq=rho,
            mu_override=s["mu_override"],
        )
    except ConfigurationError as exc:
        raise cfg.error("solver", None, str(exc)) from None

    try:
        check_config(problem, space, solver, step_bound)
    except ConfigurationError as exc:
        key = "mu" if "step-size" in str(exc) else "u0"
        raise cfg.error("solver", key, str(exc)) from None

    rate = None
    if mu < step_bound:
        rate = rate_constants(space, consts, mu, rho)
    else:
        hypotheses_ok = False
        notes.append("mu exceeds the step-size bound; rate constants undefined")
    return Experiment(cfg, space, problem, solver, rate, step_bound, hypotheses_ok, tuple(notes))


@dataclass
class RunResult:
    experiment: Experiment
    trace: IterationTrace
    report: AnalysisReport | None
    exit_code: int


def run_experiment(exp: Experiment, out_dir=None) -> RunResult:
    """Solve, analyze and (optionally) write the run artifacts."""
    trace = solve(exp.problem, exp.space, exp.solver, exp.rate)
    checks = exp.config.get("analysis", "checks")
    report = None
    if exp.rate is not None:
        report = analyze(
            trace,
            exp.rate,
            exp.space.q,
            exp.config.get("analysis", "burn_in"),
            exp.hypotheses_ok,
            checks=checks,
        )
    converged = trace.status in ("residual_converged", "gamma_converged")
    passed = report is not None and report.checks_passed
    code = 0 if converged and passed else 1
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        trace.write_csv(out / "trace.csv")
        summary = {"config": exp.config.name, "exit_code": code}
        if report is not None:
            report.write_csv(out / "analysis.csv")
            summary.update(report.summary)
        else:
            summary["checks"] = "skipped"
        for i, note in enumerate(exp.notes):
            summary[f"note_{i}"] = note
        _write_summary(out / "summary.txt", summary)
        (out / "resolved_config.ini").write_text(render_config(exp.resolved_values()))
    return RunResult(exp, trace, report, code)


def _write_summary(path, summary):
    AnalysisReport(summary=summary).write_summary(path)
