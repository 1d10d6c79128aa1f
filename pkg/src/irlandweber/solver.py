"""Iteratively regularized Landweber iteration in Banach spaces.

One step of the standard form updates the dual variable

    J_p(u_{k+1} - u0) = (1 - beta_k) J_p(u_k - u0) - mu F'(u_k)^* j_p(F(u_k) - v)

and maps back with the inverse duality mapping. ``beta_k = 0`` recovers the
plain nonlinear Landweber method. The alternative form shrinks towards
``u0`` through an additive ``beta_k J_p(u0 - u_k)`` term instead.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

SCHEDULE_KINDS = ("zero", "power", "geometric", "adaptive")
VARIANTS = ("standard", "additive")
STATUSES = ("residual_converged", "gamma_converged", "max_iterations", "left_ball")
BALL_ATOL = 1e-12
TRACE_COLUMNS = ("k", "beta", "gamma", "residual", "err_norm", "in_ball", "alpha", "bound_rhs", "status")


class ConfigurationError(ValueError):
    """Solver parameters are inconsistent or violate a hypothesis."""


@dataclass(frozen=True)
class BetaSchedule:
    """Regularization weights ``beta_k``.

    ``power``: ``base / (k+1)^decay`` with ``decay > 1`` (summable).
    ``geometric``: ``base * decay^k`` with ``0 < decay < 1``.
    ``adaptive``: ``min(base * decay^k, smoothness_C * gamma_k)``; needs the
    current error and is therefore an experiment-mode schedule only.
    Every value is clamped to ``[0, beta_max]``.
    """

    kind: str = "zero"
    base: float = 0.0
    decay: float = 2.0
    smoothness_C: float = 1.0
    beta_max: float = 0.5

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}; choose from {SCHEDULE_KINDS}")
        if not 0.0 < self.beta_max < 1.0:
            raise ConfigurationError(f"beta_max must lie in (0, 1), got {self.beta_max!r}")
        if self.kind == "zero":
            return
        if not 0.0 < self.base < 1.0:
            raise ConfigurationError(f"schedule base must lie in (0, 1), got {self.base!r}")
        if self.kind == "power" and not self.decay > 1.0:
            raise ConfigurationError(f"power schedule needs exponent > 1 for summability, got {self.decay!r}")
        if self.kind in ("geometric", "adaptive") and not 0.0 < self.decay < 1.0:
            raise ConfigurationError(f"geometric ratio must lie in (0, 1), got {self.decay!r}")
        if self.kind == "adaptive" and not self.smoothness_C > 0:
            raise ConfigurationError("adaptive schedule needs smoothness_C > 0")

    def emit(self, k: int, gamma_k: float | None = None) -> float:
        if k < 0:
            raise ValueError("iteration index must be nonnegative")
        if self.kind == "zero":
            return 0.0
        if self.kind == "power":
            beta = self.base / (k + 1.0) ** self.decay
        else:
            beta = self.base * self.decay**k
            if self.kind == "adaptive":
                if gamma_k is None or math.isnan(gamma_k):
                    raise ConfigurationError("adaptive schedule needs the ground-truth error gamma_k")
                beta = min(beta, self.smoothness_C * gamma_k)
        return min(max(beta, 0.0), self.beta_max)


def emit_beta(schedule: BetaSchedule, k: int, gamma_k: float | None = None) -> float:
    return schedule.emit(k, gamma_k)


@dataclass
class SolverConfig:
    mu: float
    u0: np.ndarray
    schedule: BetaSchedule = field(default_factory=BetaSchedule)
    variant: str = "standard"
    max_iterations: int = 1000
    residual_tolerance: float = 0.0
    gamma_tolerance: float = 0.0
    rho_sq: float | None = None
    mu_override: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError(f"step size mu must be positive, got {self.mu!r}")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.variant == "additive" and not self.schedule.beta_max < 0.5:
            raise ConfigurationError("the additive-shrinkage variant needs beta_max < 1/2")
        if self.max_iterations < 0:
            raise ConfigurationError("max_iterations must be nonnegative")
        if self.residual_tolerance < 0 or self.gamma_tolerance < 0:
            raise ConfigurationError("tolerances must be nonnegative")
        self.u0 = np.array(self.u0, dtype=float).reshape(-1)


def step(problem, space, config: SolverConfig, u_k, beta_k: float) -> np.ndarray:
    """One standard step from ``u_k`` with weight ``beta_k``."""
    space = space or problem.domain_space
    u0 = config.u0
    residual = problem.apply(u_k) - problem.data
    grad = problem.apply_adjoint(u_k, problem.range_space.duality_map(residual))
    dual = (1.0 - beta_k) * space.duality_map(u_k - u0) - config.mu * grad
    return u0 + space.inverse_duality_map(dual)


def step_variant_b(problem, space, config: SolverConfig, u_k, beta_k: float) -> np.ndarray:
    """One step of the additive-shrinkage form (unshifted duality maps)."""
    if not config.schedule.beta_max < 0.5:
        raise ConfigurationError("the additive-shrinkage variant needs beta_max < 1/2")
    space = space or problem.domain_space
    residual = problem.apply(u_k) - problem.data
    grad = problem.apply_adjoint(u_k, problem.range_space.duality_map(residual))
    dual = space.duality_map(u_k) - config.mu * grad + beta_k * space.duality_map(config.u0 - u_k)
    return space.inverse_duality_map(dual)


@dataclass(frozen=True)
class TraceRecord:
    k: int
    beta: float
    gamma: float
    residual: float
    err_norm: float
    in_ball: bool
    alpha: float
    bound_rhs: float


@dataclass
class IterationTrace:
    """Per-iteration history of a run.

    Row ``k`` holds the state ``u_k`` and the weight ``beta_k`` used to leave
    it; ``bound_rhs`` is the recursion bound that row ``k`` implies for
    ``gamma_{k+1}`` (NaN when no rate constants were supplied and on the
    final row).
    """

    records: list[TraceRecord] = field(default_factory=list)
    status: str | None = None
    final_iterate: np.ndarray | None = None

    def __len__(self):
        return len(self.records)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def gamma(self):
        return self.column("gamma")

    @property
    def beta(self):
        return self.column("beta")

    @property
    def residual(self):
        return self.column("residual")

    @property
    def has_gamma(self) -> bool:
        return len(self.records) > 0 and not np.any(np.isnan(self.gamma))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            last = len(self.records) - 1
            for i, r in enumerate(self.records):
                writer.writerow(
                    [
                        r.k,
                        _fmt(r.beta),
                        _fmt(r.gamma),
                        _fmt(r.residual),
                        _fmt(r.err_norm),
                        int(r.in_ball),
                        _fmt(r.alpha),
                        _fmt(r.bound_rhs),
                        self.status if i == last else "",
                    ]
                )

    @classmethod
    def read_csv(cls, path) -> "IterationTrace":
        trace = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                trace.records.append(
                    TraceRecord(
                        k=int(row["k"]),
                        beta=float(row["beta"]),
                        gamma=float(row["gamma"]),
                        residual=float(row["residual"]),
                        err_norm=float(row["err_norm"]),
                        in_ball=bool(int(row["in_ball"])),
                        alpha=float(row["alpha"]),
                        bound_rhs=float(row["bound_rhs"]),
                    )
                )
                if row["status"]:
                    trace.status = row["status"]
        return trace


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def check_config(problem, space, config: SolverConfig, step_bound: float | None = None):
    """Validate the step size and initial guess against the problem.

    ``step_bound`` is the admissible supremum for ``mu``. Exceeding it is an
    error unless ``config.mu_override`` is set, in which case it is logged.
    """
    space = space or problem.domain_space
    space.check(config.u0)
    if step_bound is not None and not config.mu < step_bound:
        msg = f"mu = {config.mu:.6g} is not below the admissible step-size bound mu_max = {step_bound:.6g}"
        if not config.mu_override:
            raise ConfigurationError(msg)
        log.warning("%s; continuing because mu_override is set", msg)
    if config.rho_sq is not None:
        gamma0 = space.shifted_bregman(problem.ground_truth, config.u0, config.u0)
        if gamma0 > config.rho_sq + BALL_ATOL:
            raise ConfigurationError(
                f"initial guess lies outside the ball: gamma_0 = {gamma0:.6g} > rho^2 = {config.rho_sq:.6g}"
            )


def solve(problem, space, config: SolverConfig, rate=None) -> IterationTrace:
    """Run the iteration and record the trace.

    ``rate`` is an optional :class:`~irlandweber.constants.RateConstants`;
    when given, ``alpha_k`` and the recursion bound are recorded per row.
    Stops on residual tolerance, gamma tolerance, the iteration cap, or
    when ``gamma_k`` exceeds ``config.rho_sq`` (recorded, not raised).
    """
    space = space or problem.domain_space
    check_config(problem, space, config)
    advance = step if config.variant == "standard" else step_variant_b
    u0 = config.u0
    u_dag = getattr(problem, "ground_truth", None)
    rho_sq = config.rho_sq
    trace = IterationTrace()
    u = u0.copy()
    for k in range(config.max_iterations + 1):
        residual = problem.range_space.norm(problem.apply(u) - problem.data)
        if u_dag is None:
            gamma, err = math.nan, math.nan
        else:
            gamma = space.shifted_bregman(u_dag, u, u0)
            err = space.norm(u - u_dag)
        in_ball = rho_sq is None or math.isnan(gamma) or gamma <= rho_sq + BALL_ATOL
        beta = config.schedule.emit(k, gamma)
        if rate is not None:
            alpha = float(rate.alpha(beta))
            rhs = -rate.decay * gamma**rate.decay_exponent + alpha * gamma + rate.k5 * beta
        else:
            alpha, rhs = math.nan, math.nan
        trace.records.append(TraceRecord(k, beta, gamma, residual, err, in_ball, alpha, rhs))

        if not in_ball:
            trace.status = "left_ball"
        elif residual <= config.residual_tolerance:
            trace.status = "residual_converged"
        elif gamma <= config.gamma_tolerance:
            trace.status = "gamma_converged"
        elif k == config.max_iterations:
            trace.status = "max_iterations"
        if trace.status is not None:
            break
        u = advance(problem, space, config, u, beta)
    last = trace.records[-1]
    # no successor state, so no bound is implied by the last row
    trace.records[-1] = TraceRecord(
        last.k, last.beta, last.gamma, last.residual, last.err_norm, last.in_ball, last.alpha, math.nan
    )
    trace.final_iterate = u
    return trace
