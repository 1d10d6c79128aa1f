"""Weighted finite-dimensional l^r spaces.

A :class:`SpaceGeometry` describes the discretised Banach space ``U`` in which
the iteration runs: coefficient vectors with the weighted norm

    ||u|| = (sum_i w_i |u_i|^r)^(1/r),

a duality mapping with gauge ``t -> t^(p-1)``, and the convexity/smoothness
constants ``C_p`` and ``G_q`` entering the two-sided Bregman estimates.

Vectors are plain float arrays. Elements of the dual space ``U*`` are arrays
of the same length paired with primal vectors through the weighted pairing
``<u, w> = sum_i w_i u_i w*_i``; under that pairing the dual of weighted
``l^r`` is weighted ``l^s`` with ``1/r + 1/s = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NONNEG_ATOL = 1e-12


class DimensionError(ValueError):
    """Raised when a vector does not belong to the space it is used with."""


class MissingConstantError(ValueError):
    """Raised when C_p or G_q is needed but was never supplied."""


def _conjugate(a: float) -> float:
    return a / (a - 1.0)


def _power_norm(x, r, weights):
    total = float(np.sum(weights * np.abs(x) ** r))
    if np.isfinite(total) and total > np.finfo(float).tiny:
        return total ** (1.0 / r)
    # |x|^r under- or overflowed: rescale by the largest entry
    m = float(np.max(np.abs(x), initial=0.0))
    if m == 0.0 or not np.isfinite(m):
        return m
    return m * float(np.sum(weights * np.abs(x / m) ** r) ** (1.0 / r))


def _power_norm_rows(x, r, weights):
    total = np.sum(weights * np.abs(x) ** r, axis=1, keepdims=True)
    out = total ** (1.0 / r)
    bad = ~(np.isfinite(total) & (total > np.finfo(float).tiny))
    if np.any(bad):
        rows = np.flatnonzero(bad[:, 0])
        out[rows, 0] = [_power_norm(x[i], r, weights) for i in rows]
    return out


def _signed_power(x, e):
    # sign(x)|x|^e, safe at x = 0 for e > 0
    return np.sign(x) * np.abs(x) ** e


def _duality(x, r, gauge, weights):
    if x.ndim == 2:
        return _duality_rows(x, r, gauge, weights)
    nrm = _power_norm(x, r, weights)
    if nrm == 0.0:
        return np.zeros_like(x)
    out = _signed_power(x, r - 1.0)
    if gauge != r:
        out = out * nrm ** (gauge - r)
    return out


def _duality_rows(x, r, gauge, weights):
    # one vector per row; zero rows map to zero since sign(0) = 0
    out = _signed_power(x, r - 1.0)
    if gauge != r:
        nrm = _power_norm_rows(x, r, weights)
        out = out * np.where(nrm > 0, nrm, 1.0) ** (gauge - r)
    return out


def _bregman(x, y, r, gauge, weights):
    if gauge == r == 2.0:
        return 0.5 * float(np.sum(weights * (x - y) ** 2))
    if gauge == r:
        # coordinatewise scalar Bregman distances of |t|^r/r, each term >= 0
        terms = (np.abs(x) ** r - np.abs(y) ** r) / r - _signed_power(y, r - 1.0) * (x - y)
        value = float(np.sum(weights * terms))
        scale = float(np.sum(weights * (np.abs(x) ** r + np.abs(y) ** r))) / r
    else:
        nx = _power_norm(x, r, weights)
        ny = _power_norm(y, r, weights)
        jy = _duality(y, r, gauge, weights)
        value = nx**gauge / gauge - ny**gauge / gauge - float(np.sum(weights * jy * (x - y)))
        scale = (nx**gauge + ny**gauge) / gauge
    if value < 0.0:
        if value < -NONNEG_ATOL * max(1.0, scale):
            raise ArithmeticError(f"Bregman distance evaluated to {value!r}")
        value = 0.0
    return value


def _bregman_rows(x, y, r, gauge, weights):
    diff = x - y
    if gauge == r == 2.0:
        return 0.5 * np.sum(weights * diff**2, axis=1)
    if gauge == r:
        terms = (np.abs(x) ** r - np.abs(y) ** r) / r - _signed_power(y, r - 1.0) * diff
        value = np.sum(weights * terms, axis=1)
        scale = np.sum(weights * (np.abs(x) ** r + np.abs(y) ** r), axis=1) / r
    else:
        nx = _power_norm_rows(x, r, weights)[:, 0]
        ny = _power_norm_rows(y, r, weights)[:, 0]
        jy = _duality_rows(y, r, gauge, weights)
        value = nx**gauge / gauge - ny**gauge / gauge - np.sum(weights * jy * diff, axis=1)
        scale = (nx**gauge + ny**gauge) / gauge
    if np.any(value < -NONNEG_ATOL * np.maximum(1.0, scale)):
        raise ArithmeticError("Bregman distance evaluated to a negative value")
    return np.maximum(value, 0.0)


@dataclass(frozen=True, eq=False)
class SpaceGeometry:
    """Weighted l^r space with duality gauge p.

    Parameters
    ----------
    dimension : int
        Number of coefficients.
    p : float
        Gauge exponent of the duality mapping, ``p > 1``. ``q`` is derived.
    r : float, optional
        Norm exponent; defaults to ``p``.
    weights : array_like, optional
        Positive quadrature weights, default all ones.
    c_p, g_q : float, optional
        Convexity and smoothness constants of the Bregman estimates. Both
        default to 1 in the Hilbert case ``p = r = 2``; otherwise they must be
        given, e.g. from :func:`estimate_convexity_constants`.
    needs_constants : bool
        Set to False for data spaces, where only the norm and duality map are
        used and no constants are required.
    """

    dimension: int
    p: float
    r: float | None = None
    weights: np.ndarray | None = None
    c_p: float | None = None
    g_q: float | None = None
    needs_constants: bool = field(default=True, repr=False)

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dimension!r}")
        object.__setattr__(self, "dimension", int(self.dimension))
        if not self.p > 1.0:
            raise ValueError(f"gauge exponent p must exceed 1, got {self.p!r}")
        r = self.p if self.r is None else self.r
        if not r > 1.0:
            raise ValueError(f"norm exponent r must exceed 1, got {r!r}")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "r", float(r))
        if self.weights is None:
            w = np.ones(self.dimension)
        else:
            w = np.array(self.weights, dtype=float).reshape(-1)
        if w.shape != (self.dimension,):
            raise DimensionError(f"expected {self.dimension} weights, got {w.size}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and strictly positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

        if self.is_hilbert:
            if self.c_p is None:
                object.__setattr__(self, "c_p", 1.0)
            if self.g_q is None:
                object.__setattr__(self, "g_q", 1.0)
        elif self.needs_constants and (self.c_p is None or self.g_q is None):
            raise MissingConstantError(
                "c_p and g_q are required outside the Hilbert case p = r = 2; "
                "use SpaceGeometry.with_estimated_constants"
            )
        for name in ("c_p", "g_q"):
            val = getattr(self, name)
            if val is not None:
                if not (np.isfinite(val) and val > 0):
                    raise ValueError(f"{name} must be finite and positive, got {val!r}")
                object.__setattr__(self, name, float(val))

    @classmethod
    def with_estimated_constants(cls, dimension, p, r=None, weights=None, sample_count=10_000, seed=0):
        """Build a space whose ``c_p``/``g_q`` are sampled estimates."""
        bare = cls(dimension, p, r, weights, needs_constants=False)
        c_p, g_q = estimate_convexity_constants(bare, sample_count, seed)
        return cls(dimension, p, r, weights, c_p=c_p, g_q=g_q)

    @classmethod
    def data_space(cls, dimension, p):
        """Unweighted l^2 with gauge ``p``, used for the data space V."""
        return cls(dimension, p, r=2.0, needs_constants=False)

    # exponents -----------------------------------------------------------

    @property
    def q(self) -> float:
        return _conjugate(self.p)

    @property
    def s(self) -> float:
        """Norm exponent of the dual space."""
        return _conjugate(self.r)

    @property
    def is_hilbert(self) -> bool:
        return self.p == 2.0 and self.r == 2.0

    def constants(self) -> tuple[float, float]:
        if self.c_p is None or self.g_q is None:
            raise MissingConstantError("this space carries no convexity/smoothness constants")
        return self.c_p, self.g_q

    # vectors -------------------------------------------------------------

    def check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.ndim == 0:
            u = u.reshape(1)
        if u.shape != (self.dimension,):
            raise DimensionError(f"vector of shape {u.shape} does not live in a {self.dimension}-dimensional space")
        if not np.all(np.isfinite(u)):
            raise ValueError("vector has non-finite entries")
        return u

    def check_rows(self, u) -> np.ndarray:
        """Validate a stack of vectors, one per row."""
        u = np.asarray(u, dtype=float)
        if u.ndim != 2 or u.shape[1] != self.dimension:
            raise DimensionError(f"array of shape {u.shape} is not a stack of {self.dimension}-vectors")
        if not np.all(np.isfinite(u)):
            raise ValueError("vector has non-finite entries")
        return u

    def zeros(self) -> np.ndarray:
        return np.zeros(self.dimension)

    def pairing(self, u, w) -> float:
        """Dual pairing ``<u, w>`` of a primal and a dual vector."""
        return float(np.sum(self.weights * self.check(u) * self.check(w)))

    def norm(self, u) -> float:
        return _power_norm(self.check(u), self.r, self.weights)

    def dual_norm(self, w) -> float:
        return _power_norm(self.check(w), self.s, self.weights)

    def duality_map(self, u) -> np.ndarray:
        """J_p(u)_i = ||u||^(p-r) |u_i|^(r-2) u_i, with J_p(0) = 0."""
        return _duality(self.check(u), self.r, self.p, self.weights)

    def inverse_duality_map(self, w) -> np.ndarray:
        """Duality mapping of the dual space with gauge ``t^(q-1)``; inverts J_p."""
        return _duality(self.check(w), self.s, self.q, self.weights)

    def duality_map_rows(self, u) -> np.ndarray:
        """:meth:`duality_map` applied to every row of ``u``."""
        return _duality(self.check_rows(u), self.r, self.p, self.weights)

    def inverse_duality_map_rows(self, w) -> np.ndarray:
        """:meth:`inverse_duality_map` applied to every row of ``w``."""
        return _duality(self.check_rows(w), self.s, self.q, self.weights)

    def bregman(self, u1, u2) -> float:
        """Bregman distance of ``u -> ||u||^p / p`` between ``u1`` and ``u2``."""
        return _bregman(self.check(u1), self.check(u2), self.r, self.p, self.weights)

    def dual_bregman(self, w1, w2) -> float:
        """Bregman distance of ``w -> ||w||_*^q / q`` on the dual space."""
        return _bregman(self.check(w1), self.check(w2), self.s, self.q, self.weights)

    def bregman_rows(self, u1, u2) -> np.ndarray:
        """:meth:`bregman` for every pair of rows."""
        return _bregman_rows(self.check_rows(u1), self.check_rows(u2), self.r, self.p, self.weights)

    def dual_bregman_rows(self, w1, w2) -> np.ndarray:
        return _bregman_rows(self.check_rows(w1), self.check_rows(w2), self.s, self.q, self.weights)

    def shifted_bregman(self, u_dag, u, u0) -> float:
        """Bregman distance measured from the initial guess: D(u_dag - u0, u - u0)."""
        u0 = self.check(u0)
        return self.bregman(self.check(u_dag) - u0, self.check(u) - u0)

    def norm_ball_radius(self, rho_sq: float) -> float:
        """Norm radius containing the Bregman ball of radius ``rho_sq``."""
        c_p, _ = self.constants()
        return (self.p * rho_sq / c_p) ** (1.0 / self.p)

    def __eq__(self, other):
        if not isinstance(other, SpaceGeometry):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.p == other.p
            and self.r == other.r
            and self.c_p == other.c_p
            and self.g_q == other.g_q
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


def sample_pairs(space: SpaceGeometry, count: int, rng: np.random.Generator):
    """Draw ``count`` pairs of vectors for constant estimation.

    Half of the pairs are independent Gaussian vectors; the rest are close
    pairs ``(u, u + t h)`` with log-uniform ``t``, which probe the local
    curvature of the norm.
    """
    n = space.dimension
    a = rng.standard_normal((count, n))
    b = rng.standard_normal((count, n))
    close = rng.random(count) < 0.5
    scale = 10.0 ** rng.uniform(-3, 0, size=count)
    b[close] = a[close] + scale[close, None] * b[close]
    return a, b


def convexity_ratios(space: SpaceGeometry, a, b):
    """Per-pair ratios ``p D_p / ||a-b||^p`` and ``q D_q / ||a-b||_*^q``.

    ``a`` and ``b`` are read once as primal and once as dual vectors.
    Coincident pairs yield NaN.
    """
    p, q = space.p, space.q
    a, b = space.check_rows(a), space.check_rows(b)
    diff = np.abs(a - b)
    d = np.sum(space.weights * diff**space.r, axis=1) ** (1.0 / space.r)
    dd = np.sum(space.weights * diff**space.s, axis=1) ** (1.0 / space.s)
    with np.errstate(divide="ignore", invalid="ignore"):
        primal = np.where(d > 0, p * space.bregman_rows(a, b) / d**p, np.nan)
        dual = np.where(dd > 0, q * space.dual_bregman_rows(a, b) / dd**q, np.nan)
    return primal, dual


def estimate_convexity_constants(space: SpaceGeometry, sample_count: int, seed: int) -> tuple[float, float]:
    """Empirical C_p (smallest ratio) and G_q (largest ratio) over sampled pairs.

    The returned pair satisfies both two-sided Bregman estimates on every
    sampled pair by construction. They are empirical bounds, not proven
    constants.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be positive")
    rng = np.random.default_rng(seed)
    a, b = sample_pairs(space, sample_count, rng)
    primal, dual = convexity_ratios(space, a, b)
    return float(np.nanmin(primal)), float(np.nanmax(dual))
