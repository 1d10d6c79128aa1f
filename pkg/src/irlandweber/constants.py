"""Closed-form constants and parameter bounds of the convergence theory.

Everything here is a pure function of a :class:`~irlandweber.geometry.SpaceGeometry`
(for ``p``, ``q``, ``C_p``, ``G_q``) and a :class:`ProblemConstants` record
(for ``L``, ``L_hat``, ``C_F``, ``eps``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

from .geometry import SpaceGeometry

log = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)


class InfeasibleError(ValueError):
    """A parameter bound has no admissible value for the given constants."""


@dataclass(frozen=True)
class ProblemConstants:
    """Constants declared by a forward problem on its domain ball.

    ``lipschitz_L`` bounds the Lipschitz constant of the derivative (0 for
    linear maps, ``inf`` when the derivative is not Lipschitz on the ball),
    ``deriv_bound_Lhat`` bounds ``||F'(u)||``, and ``stability_CF`` with
    ``stability_eps`` form the Hölder stability estimate
    ``D(u1, u2) <= C_F^p ||F(u1) - F(u2)||^((1+eps) p / 2)``.
    """

    lipschitz_L: float
    deriv_bound_Lhat: float
    stability_CF: float
    stability_eps: float

    def __post_init__(self):
        if not self.lipschitz_L >= 0:
            raise ValueError(f"lipschitz_L must be nonnegative, got {self.lipschitz_L!r}")
        for name in ("deriv_bound_Lhat", "stability_CF"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be finite and positive, got {val!r}")
        if not 0.0 <= self.stability_eps <= 1.0:
            raise ValueError(f"stability_eps must lie in [0, 1], got {self.stability_eps!r}")


def kappa_p_terms(p: float) -> tuple[float, float, float, float]:
    """The four candidates whose minimum defines K_p (before the 4(2+sqrt 3) factor)."""
    if not p > 1.0:
        raise ValueError(f"kappa_p needs p > 1, got {p!r}")
    q = p / (p - 1.0)
    return (
        min(0.5 * p * (p - 1.0), 1.0),
        min(0.5 * p, 1.0) * (p - 1.0),
        (p - 1.0) * (1.0 - (SQRT3 - 1.0) ** q),
        1.0 - (1.0 + (2.0 - SQRT3) * p / (p - 1.0)) ** (1.0 - p),
    )


def kappa_p(p: float) -> float:
    return 4.0 * (2.0 + SQRT3) * min(kappa_p_terms(p))


def mu_max(space: SpaceGeometry, consts: ProblemConstants) -> float:
    """Supremum of step sizes with ``mu^(q-1) < q / (2^q L_hat^q G_q)``."""
    _, g_q = space.constants()
    q = space.q
    bound = q / (2.0**q * consts.deriv_bound_Lhat**q * g_q)
    return bound ** (1.0 / (q - 1.0))


def _stability_penalty(space: SpaceGeometry, consts: ProblemConstants) -> float:
    # (1/2) L C_F^2 (p / C_p)^(2/p)
    c_p, _ = space.constants()
    p = space.p
    return 0.5 * consts.lipschitz_L * consts.stability_CF**2 * (p / c_p) ** (2.0 / p)


def mu_max_eps0(space: SpaceGeometry, consts: ProblemConstants) -> float:
    """Supremum of admissible step sizes in the eps = 0 regime."""
    _, g_q = space.constants()
    q = space.q
    bracket = 1.0 - _stability_penalty(space, consts)
    if not bracket > 0.0:
        raise InfeasibleError(
            "no admissible step size for eps = 0: 1 - L C_F^2 (p/C_p)^(2/p) / 2 "
            f"= {bracket:.6g} is not positive"
        )
    bound = q / (2.0 ** (q - 1.0) * g_q * consts.deriv_bound_Lhat**q) * bracket
    return bound ** (1.0 / (q - 1.0))


def step_size_bound(space: SpaceGeometry, consts: ProblemConstants) -> float:
    """``mu_max`` or ``mu_max_eps0`` depending on the declared Hölder exponent."""
    if consts.stability_eps == 0.0:
        return mu_max_eps0(space, consts)
    return mu_max(space, consts)


def rho_squared(space: SpaceGeometry, consts: ProblemConstants) -> float:
    """Radius of the Bregman ball on which the convergence proof operates.

    Returns ``inf`` for a linear problem (``L = 0``), where any radius works.
    """
    eps = consts.stability_eps
    if eps == 0.0:
        raise ValueError("the ball radius formula is singular at eps = 0; supply rho_sq explicitly")
    c_p, _ = space.constants()
    p = space.p
    lc = consts.lipschitz_L * consts.stability_CF**2
    if lc == 0.0:
        return math.inf
    if math.isinf(lc):
        return 0.0
    return consts.deriv_bound_Lhat ** (-p) * lc ** (-p / eps) * (c_p / p) ** (1.0 + 2.0 / eps)


def beta_admissible_max(space: SpaceGeometry) -> float:
    """Largest ``beta_k`` keeping the shifted Bregman error non-increasing.

    Only defined when ``p < C_p``.
    """
    c_p, g_q = space.constants()
    p, q = space.p, space.q
    if not c_p > p:
        raise InfeasibleError(f"monotonicity bound needs p < C_p, got p = {p:g}, C_p = {c_p:g}")
    bound = q / (p * g_q) * 2.0 ** (1.0 - (p + q)) * (c_p - p)
    return bound ** (1.0 / (q - 1.0))


def effective_beta_max(space: SpaceGeometry, beta_max: float) -> float:
    """Clamp a user ``beta_max`` by :func:`beta_admissible_max` where it exists."""
    try:
        return min(beta_max, beta_admissible_max(space))
    except InfeasibleError as exc:
        log.warning("beta_max %.6g kept unclamped; convergence-rate hypotheses fail (%s)", beta_max, exc)
        return beta_max


@dataclass(frozen=True)
class RateConstants:
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    m1: float
    mu: float
    rho_sq: float
    t: float
    eps: float
    p: float
    q: float
    c_p: float
    g_q: float
    alpha_k: float = 1.0

    def alpha(self, beta):
        """``alpha_k`` as a function of ``beta_k``; accepts arrays."""
        p, q = self.p, self.q
        return (
            1.0
            + beta / self.c_p
            - beta
            + 2.0 ** (p + q - 2.0) * beta**q * (self.g_q / q) * (p / self.c_p)
        )

    @property
    def decay(self) -> float:
        """Coefficient of the negative power term in the error recursion."""
        return self.m1 if self.eps == 0.0 else self.k2

    @property
    def decay_exponent(self) -> float:
        return 2.0 / (1.0 + self.eps)


def rate_constants(
    space: SpaceGeometry,
    consts: ProblemConstants,
    mu: float,
    rho_sq: float,
    beta_k: float = 0.0,
) -> RateConstants:
    """Evaluate K1..K5, M1, t and ``alpha_k`` for a step size and ball radius.

    ``m1`` is returned as the positive coefficient ``C_F^(-2p) [mu - 2^(q-1)
    (G_q/q) mu^q L_hat^q - (mu/2) L C_F^2 (p/C_p)^(2/p)]`` of the eps = 0
    recursion ``gamma_{k+1} <= -m1 gamma_k^2 + alpha_k gamma_k + K5 beta_k``.
    """
    c_p, g_q = space.constants()
    p, q = space.p, space.q
    eps = consts.stability_eps
    if not (rho_sq > 0 and math.isfinite(rho_sq)):
        raise ValueError(f"rho_sq must be finite and positive, got {rho_sq!r}")
    bound = step_size_bound(space, consts)
    if not 0.0 < mu < bound:
        which = "eps = 0 bound" if eps == 0.0 else "step size bound"
        raise InfeasibleError(f"mu = {mu:.6g} violates the {which} mu < {bound:.6g} (K1 would not be positive)")

    lhat, cf = consts.deriv_bound_Lhat, consts.stability_CF
    gradient_term = 2.0 ** (q - 1.0) * (g_q / q) * mu**q * lhat**q
    k1 = mu / 2.0 - gradient_term
    k2 = k1 * cf ** (-2.0 * p / (1.0 + eps))
    k3 = 2.0 ** (p + q - 2.0) * (g_q / q) * (p / c_p) * rho_sq
    k4 = (p - 1.0) / c_p * rho_sq
    m1 = cf ** (-2.0 * p) * (mu - gradient_term - mu * _stability_penalty(space, consts))
    rc = RateConstants(
        k1=k1,
        k2=k2,
        k3=k3,
        k4=k4,
        k5=k3 + k4,
        m1=m1,
        mu=mu,
        rho_sq=rho_sq,
        t=(1.0 - eps) / (1.0 + eps),
        eps=eps,
        p=p,
        q=q,
        c_p=c_p,
        g_q=g_q,
    )
    return replace(rc, alpha_k=float(rc.alpha(beta_k)))
