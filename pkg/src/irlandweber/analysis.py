"""Numerical checks of the convergence-rate claims on recorded traces.

Every function here is pure: it takes an :class:`~irlandweber.solver.IterationTrace`
(or plain arrays) plus a :class:`~irlandweber.constants.RateConstants` record
and returns arrays and verdicts. Nothing is mutated, so re-running an
analysis is bit-identical.

Tolerances: recursion slack is accepted down to ``-1e-12`` (absolute) and
envelopes up to a relative excess of ``1e-9``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)

SLACK_ATOL = 1e-12
ENVELOPE_RTOL = 1e-9
DEFAULT_BURN_IN = 0.2
HYPOTHESES_FAIL = "hypotheses-not-satisfied"


# --- regression -------------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    residual_rms: float
    n: int


def convergence_slope(x, y, window=None) -> SlopeFit:
    """Least-squares fit of ``log y = slope * log x + intercept``.

    Parameters
    ----------
    x, y : array_like
        Paired positive series. Pairs where either value is not positive
        (or not finite) are dropped after windowing.
    window : slice or (start, stop), optional
        Index range to fit over.

    Raises
    ------
    ValueError
        If fewer than five usable points remain.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if window is not None:
        sl = window if isinstance(window, slice) else slice(*window)
        x, y = x[sl], y[sl]
    ok = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 5:
        raise ValueError(f"need at least 5 positive points for a log-log fit, got {int(ok.sum())}")
    lx, ly = np.log(x[ok]), np.log(y[ok])
    if np.all(lx == lx[0]):
        raise ValueError("x values are all equal; slope undefined")
    res = stats.linregress(lx, ly)
    resid = ly - (res.slope * lx + res.intercept)
    return SlopeFit(
        slope=float(res.slope),
        stderr=float(res.stderr),
        intercept=float(res.intercept),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        n=int(ok.sum()),
    )


# --- recursion --------------------------------------------------------------


def _require_gamma(trace):
    gamma = trace.gamma
    if len(gamma) == 0 or np.any(np.isnan(gamma)):
        raise ValueError("trace carries no ground-truth error gamma_k; the check needs it")
    return gamma


@dataclass(frozen=True)
class RecursionCheck:
    slack: np.ndarray = field(repr=False)
    min_slack: float
    passed: bool


def recursion_slack(gamma, beta, rc) -> np.ndarray:
    """``RHS_k - gamma_{k+1}`` with ``RHS_k = -c gamma_k^e + alpha_k gamma_k + K5 beta_k``.

    ``c`` and ``e`` are ``rc.decay`` and ``rc.decay_exponent`` (``K2`` and
    ``2/(1+eps)``, or ``m1`` and 2 when eps = 0).
    """
    gamma = np.asarray(gamma, dtype=float)
    beta = np.asarray(beta, dtype=float)
    g, b = gamma[:-1], beta[:-1]
    rhs = -rc.decay * g**rc.decay_exponent + rc.alpha(b) * g + rc.k5 * b
    return rhs - gamma[1:]


def check_recursion(trace, rc) -> RecursionCheck:
    """Evaluate the one-step error recursion on every consecutive pair of the trace.

    A negative slack means the recursion is violated at that step; this is
    reported, not raised, so hypothesis-violation runs can be inspected.
    """
    gamma = _require_gamma(trace)
    slack = recursion_slack(gamma, trace.beta, rc)
    min_slack = float(slack.min()) if slack.size else math.inf
    return RecursionCheck(slack, min_slack, bool(min_slack >= -SLACK_ATOL))


def check_eps0(trace, rc) -> RecursionCheck:
    """Recursion check of the eps = 0 regime (exponent 2, constant ``m1``)."""
    if rc.eps != 0.0:
        raise ValueError(f"the eps = 0 check needs a problem declared with eps = 0, got eps = {rc.eps:g}")
    return check_recursion(trace, rc)


# --- envelopes --------------------------------------------------------------


@dataclass(frozen=True)
class RateBoundSeries:
    """Ingredients and result of the explicit rate envelope.

    Arrays ``d, e, f, alpha`` are indexed by step ``k = 0..K-1``; ``log_g``,
    ``h`` and ``predicted_bound`` by iterate ``k = 0..K`` (``h[0]`` is NaN and
    ``predicted_bound[0] = rho_sq``).
    """

    d: np.ndarray = field(repr=False)
    e: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    log_g: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    t: float = 1.0
    decay: float = 0.0
    k5: float = 0.0
    smoothness_C: float = 0.0
    rho_sq: float = 0.0
    predicted_bound: np.ndarray = field(default=None, repr=False)
    eta: np.ndarray | None = field(default=None, repr=False)
    eta_cap: float | None = None

    @property
    def g(self) -> np.ndarray:
        return np.exp(self.log_g)


def _envelope(alpha, decay, k5, smoothness_C, rho_sq, t) -> RateBoundSeries:
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if not (rho_sq > 0 and math.isfinite(rho_sq)):
        raise ValueError("rho_sq must be finite and positive")
    if not 0 < t <= 1:
        raise ValueError(f"envelope exponent t must lie in (0, 1], got {t!r}")
    d = alpha + smoothness_C * k5
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise ValueError("d_k = alpha_k + C K5 must be finite and positive")
    e = decay / d
    f = t * e * d ** (-t)
    n = alpha.size
    log_g = np.zeros(n + 1)
    log_g[1:] = np.cumsum(np.log(d))
    h = np.full(n + 1, np.nan)
    if n:
        h[1] = f[0]
        for k in range(1, n):
            h[k + 1] = d[k] ** (-1.0 / t) * h[k] + f[k]
    bound = np.empty(n + 1)
    bound[0] = rho_sq
    lead = np.exp(-t * (log_g[1:] + math.log(rho_sq)))
    bound[1:] = (lead + h[1:]) ** (-1.0 / t)
    return RateBoundSeries(
        d=d,
        e=e,
        f=f,
        log_g=log_g,
        h=h,
        alpha=alpha,
        t=t,
        decay=decay,
        k5=k5,
        smoothness_C=smoothness_C,
        rho_sq=rho_sq,
        predicted_bound=bound,
    )


def rate_envelope(alpha, k2, k5, smoothness_C, rho_sq, eps) -> RateBoundSeries:
    """Explicit bound ``((g_k rho^2)^(-t) + h_k)^(-1/t)`` for ``0 < eps < 1``.

    ``alpha`` holds ``alpha_0 .. alpha_{K-1}``; the bound is returned for
    ``k = 0 .. K`` with ``t = (1-eps)/(1+eps)``, ``d_k = alpha_k + C K5``,
    ``e_k = K2/d_k``, ``f_k = t e_k d_k^(-t)``, ``g_k = d_0 ... d_{k-1}`` and
    ``h_{k+1} = d_k^(-1/t) h_k + f_k`` with ``h_1 = f_0``.
    """
    if eps == 1.0:
        raise ValueError("eps = 1 has t = 0; use product_bound_eps1")
    if eps == 0.0:
        raise ValueError("eps = 0 uses the m1 envelope; use eps0_envelope")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps!r}")
    return _envelope(alpha, k2, k5, smoothness_C, rho_sq, (1.0 - eps) / (1.0 + eps))


def eps0_envelope(alpha, m1, k5, smoothness_C, rho_sq) -> RateBoundSeries:
    """The ``t = 1`` envelope ``((g_k rho^2)^(-1) + h_k)^(-1)`` with ``e_k = m1/d_k``."""
    return _envelope(alpha, m1, k5, smoothness_C, rho_sq, 1.0)


@dataclass(frozen=True)
class ProductBound:
    bound: np.ndarray = field(repr=False)
    factors: np.ndarray = field(repr=False)
    meaningful: bool


def product_bound_eps1(alpha, k2, k5, smoothness_C, rho_sq) -> ProductBound:
    """Lipschitz-case bound ``gamma_k <= prod_{i<k} (-K2 + alpha_i + K5 C) rho^2``.

    The bound only decays when every factor lies in (0, 1); otherwise it is
    still returned but flagged as not meaningful.
    """
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    factors = -k2 + alpha + k5 * smoothness_C
    bound = np.empty(alpha.size + 1)
    bound[0] = rho_sq
    with np.errstate(over="ignore"):
        bound[1:] = rho_sq * np.cumprod(factors)
    meaningful = bool(np.all((factors > 0) & (factors < 1)))
    if not meaningful:
        log.warning("product bound factors leave (0, 1) (range %.6g .. %.6g); bound is vacuous",
                    factors.min() if factors.size else math.nan, factors.max() if factors.size else math.nan)
    return ProductBound(bound, factors, meaningful)


def smoothness_constant(beta, gamma) -> float:
    """Smallest ``C`` with ``beta_k <= C gamma_k`` on every step of the trace.

    Only steps that feed a recursion (all but the last row) count. Returns
    ``inf`` when some ``beta_k > 0`` meets ``gamma_k = 0``.
    """
    beta = np.asarray(beta, dtype=float)[:-1]
    gamma = np.asarray(gamma, dtype=float)[:-1]
    active = beta > 0
    if not np.any(active):
        return 0.0
    if np.any(gamma[active] <= 0):
        return math.inf
    return float(np.max(beta[active] / gamma[active]))


@dataclass(frozen=True)
class EnvelopeCheck:
    bound: np.ndarray = field(repr=False)
    smoothness_C: float
    smoothness_ok: bool
    max_ratio: float
    passed: bool
    kind: str
    meaningful: bool = True


def check_envelope(trace, rc, smoothness_C=None) -> EnvelopeCheck:
    """Compare ``gamma_k`` with the explicit rate bound for ``k >= 1``.

    The bound used depends on ``rc.eps``: the product bound for eps = 1, the
    ``t = 1`` envelope with ``m1`` for eps = 0 and the general envelope
    otherwise. ``smoothness_C`` defaults to the post-hoc value from
    :func:`smoothness_constant`.
    """
    gamma = _require_gamma(trace)
    beta = trace.beta
    if smoothness_C is None:
        smoothness_C = smoothness_constant(beta, gamma)
    alpha = rc.alpha(beta[:-1])
    n = len(gamma)
    if not math.isfinite(smoothness_C):
        nan = np.full(n, np.nan)
        return EnvelopeCheck(nan, smoothness_C, False, math.nan, False, "none", False)
    meaningful = True
    if rc.eps == 1.0:
        pb = product_bound_eps1(alpha, rc.k2, rc.k5, smoothness_C, rc.rho_sq)
        bound, kind, meaningful = pb.bound, "product", pb.meaningful
    elif rc.eps == 0.0:
        bound, kind = eps0_envelope(alpha, rc.m1, rc.k5, smoothness_C, rc.rho_sq).predicted_bound, "eps0"
    else:
        series = rate_envelope(alpha, rc.k2, rc.k5, smoothness_C, rc.rho_sq, rc.eps)
        bound, kind = series.predicted_bound, "envelope"
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound[1:] > 0, gamma[1:] / bound[1:], np.where(gamma[1:] > 0, np.inf, 0.0))
    max_ratio = float(ratio.max()) if ratio.size else 0.0
    return EnvelopeCheck(bound, smoothness_C, True, max_ratio, bool(max_ratio <= 1.0 + ENVELOPE_RTOL), kind, meaningful)


# --- order ------------------------------------------------------------------


@dataclass(frozen=True)
class OrderCheck:
    eta: np.ndarray = field(repr=False)
    eta_cap: float
    flags: np.ndarray = field(repr=False)
    fitted_slope: float
    all_flags_hold: bool


def check_order(trace, q, rc=None, burn_in=DEFAULT_BURN_IN) -> OrderCheck:
    """Order of ``gamma_k`` relative to ``beta_k^(q-1)``.

    ``eta_k = gamma_k / beta_k^(q-1)``; ``eta_cap`` is its maximum after the
    first ``burn_in`` fraction of iterations. With ``rc`` given, the per-step
    sufficient condition ``K5 + eta_cap/beta_k [alpha_k - (beta_{k+1}/beta_k)^(q-1)] <= 0``
    for boundedness of ``eta_k`` is evaluated. ``fitted_slope`` is the log-log
    slope of ``gamma_k`` against ``beta_k`` over the same window (NaN if
    fewer than five usable points).
    """
    gamma = _require_gamma(trace)
    beta = trace.beta
    if np.any(beta <= 0):
        raise ValueError("order check needs beta_k > 0 at every k (zero schedule has no order)")
    if not 0.0 <= burn_in < 1.0:
        raise ValueError("burn_in must lie in [0, 1)")
    eta = gamma / beta ** (q - 1.0)
    start = int(burn_in * len(gamma))
    eta_cap = float(np.max(eta[start:]))
    if rc is not None:
        b = beta[:-1]
        ratio = (beta[1:] / b) ** (q - 1.0)
        flags = rc.k5 + eta_cap / b * (rc.alpha(b) - ratio) <= 0.0
    else:
        flags = np.zeros(0, dtype=bool)
    try:
        slope = convergence_slope(beta, gamma, window=slice(start, None)).slope
    except ValueError:
        slope = math.nan
    return OrderCheck(eta, eta_cap, flags, slope, bool(flags.size and flags.all()))


# --- reports ----------------------------------------------------------------

ANALYSIS_COLUMNS = ("k", "gamma", "bound", "slack", "eta", "order_cond")


@dataclass
class AnalysisReport:
    """Per-k columns and a flat summary, ready for serialization."""

    columns: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    checks_passed: bool = True

    def write_csv(self, path):
        n = len(self.columns["k"])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ANALYSIS_COLUMNS)
            for i in range(n):
                row = [int(self.columns["k"][i])]
                for name in ANALYSIS_COLUMNS[1:-1]:
                    row.append(format(float(self.columns[name][i]), ".17g"))
                flag = self.columns["order_cond"][i]
                row.append("" if flag is None else int(flag))
                writer.writerow(row)

    def write_summary(self, path):
        with open(path, "w") as fh:
            for key, value in self.summary.items():
                fh.write(f"{key}={_fmt_value(value)}\n")


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _verdict(ok: bool, hypotheses_ok: bool) -> str:
    if not hypotheses_ok:
        return HYPOTHESES_FAIL
    return "pass" if ok else "fail"


def analyze(
    trace, rc, q, burn_in=DEFAULT_BURN_IN, hypotheses_ok=True, checks=("recursion", "envelope", "order")
) -> AnalysisReport:
    """Run the selected checks on a trace and assemble the report.

    ``hypotheses_ok`` False stamps each verdict ``hypotheses-not-satisfied``;
    the numeric outcomes are still recorded under ``*_numeric`` keys and
    decide :attr:`AnalysisReport.checks_passed`. Columns are always filled;
    ``checks`` only selects what enters the overall verdict.
    """
    gamma = _require_gamma(trace)
    n = len(gamma)
    rec = check_recursion(trace, rc)
    env = check_envelope(trace, rc)
    slack = np.full(n, np.nan)
    slack[:-1] = rec.slack
    bound = env.bound if env.bound.size == n else np.full(n, np.nan)
    beta = trace.beta
    eta = np.full(n, np.nan)
    cond = [None] * n
    summary = {
        "iterations": n - 1,
        "status": trace.status,
        "final_gamma": float(gamma[-1]),
        "min_slack": rec.min_slack,
        "slack_criterion": f"min_slack>=-{SLACK_ATOL:g}",
        "recursion_numeric": "pass" if rec.passed else "fail",
        "recursion": _verdict(rec.passed, hypotheses_ok),
        "smoothness_C": env.smoothness_C,
        "smoothness_check": "pass" if env.smoothness_ok else "fail",
        "envelope_kind": env.kind,
        "envelope_max_ratio": env.max_ratio,
        "envelope_meaningful": env.meaningful,
    }
    passed = rec.passed or "recursion" not in checks
    if env.smoothness_ok:
        summary["envelope_numeric"] = "pass" if env.passed else "fail"
        summary["envelope"] = _verdict(env.passed, hypotheses_ok)
        # the envelope is only claimed when the recursion itself holds
        if rec.passed and "envelope" in checks:
            passed = passed and env.passed
    else:
        summary["envelope"] = "skipped"
    if np.all(beta > 0):
        oc = check_order(trace, q, rc, burn_in)
        eta = oc.eta
        for i, flag in enumerate(oc.flags):
            cond[i] = bool(flag)
        summary["eta_cap"] = oc.eta_cap
        summary["order_fitted_slope"] = oc.fitted_slope
        summary["order_conditions_hold"] = oc.all_flags_hold
        if oc.all_flags_hold and math.isfinite(oc.fitted_slope):
            ok = oc.fitted_slope >= q - 1.0 - 0.15
            summary["order"] = _verdict(ok, hypotheses_ok)
            if "order" in checks:
                passed = passed and ok
        else:
            summary["order"] = "not-applicable"
    summary["hypotheses"] = "satisfied" if hypotheses_ok else HYPOTHESES_FAIL
    summary["checks"] = "pass" if passed else "fail"
    columns = {
        "k": np.arange(n),
        "gamma": gamma,
        "bound": bound,
        "slack": slack,
        "eta": eta,
        "order_cond": cond,
    }
    return AnalysisReport(columns, summary, passed)
