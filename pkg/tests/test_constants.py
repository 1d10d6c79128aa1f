import math

import numpy as np
import pytest

from irlandweber.constants import (
    InfeasibleError,
    ProblemConstants,
    beta_admissible_max,
    effective_beta_max,
    kappa_p,
    kappa_p_terms,
    mu_max,
    mu_max_eps0,
    rate_constants,
    rho_squared,
    step_size_bound,
)
from irlandweber.geometry import SpaceGeometry


def hilbert(c_p=1.0, g_q=1.0):
    return SpaceGeometry(1, 2.0, c_p=c_p, g_q=g_q)


def consts(L=1.0, lhat=1.0, cf=1.0, eps=1.0):
    return ProblemConstants(L, lhat, cf, eps)


def test_kappa_p_two():
    # hand evaluation: 4 (2 + sqrt 3) * (1 - (1 + 2 (2 - sqrt 3))^(-1))
    s3 = math.sqrt(3)
    by_hand = 4 * (2 + s3) * (1 - 1 / (1 + 2 * (2 - s3)))
    assert kappa_p(2.0) == pytest.approx(by_hand, rel=1e-14)
    assert kappa_p(2.0) == pytest.approx(5.2088, abs=5e-4)
    terms = kappa_p_terms(2.0)
    assert int(np.argmin(terms)) == 3
    assert terms[3] == pytest.approx(0.34892, abs=1e-5)


def test_kappa_p_limits_and_continuity():
    assert kappa_p(1.0 + 1e-9) < 1e-6
    # no jumps: halving the grid step roughly halves the largest increment
    coarse = np.linspace(1.05, 6.0, 401)
    fine = np.linspace(1.05, 6.0, 801)
    jump_c = np.abs(np.diff([kappa_p(p) for p in coarse])).max()
    jump_f = np.abs(np.diff([kappa_p(p) for p in fine])).max()
    assert jump_f < 0.6 * jump_c
    with pytest.raises(ValueError):
        kappa_p(1.0)


def test_mu_max_examples():
    assert mu_max(hilbert(), consts(lhat=1.0)) == 0.5
    assert mu_max(hilbert(), consts(lhat=2.0)) == 0.125
    sp = SpaceGeometry(1, 3.0, c_p=0.5, g_q=1.3)
    q = sp.q
    a, b = mu_max(sp, consts(lhat=1.7)), mu_max(sp, consts(lhat=1.7 * 2.5))
    assert a / b == pytest.approx(2.5 ** (q / (q - 1)), rel=1e-12)


def test_mu_max_eps0_examples():
    assert mu_max_eps0(hilbert(c_p=4.0), consts(eps=0.0)) == pytest.approx(0.75, rel=1e-15)
    # L C_F^2 (p/C_p)^(2/p) = 2 makes the bracket vanish
    with pytest.raises(InfeasibleError):
        mu_max_eps0(hilbert(c_p=1.0), consts(L=1.0, eps=0.0))
    # L -> 0: bracket -> 1, giving twice the eps > 0 bound for q = 2
    sp = hilbert()
    assert mu_max_eps0(sp, consts(L=0.0, eps=0.0)) == pytest.approx(2 * mu_max(sp, consts()), rel=1e-15)


def test_step_size_bound_mode():
    sp = hilbert(c_p=4.0)
    assert step_size_bound(sp, consts(eps=0.0)) == mu_max_eps0(sp, consts(eps=0.0))
    assert step_size_bound(sp, consts(eps=0.5)) == mu_max(sp, consts(eps=0.5))


def test_rho_squared_examples():
    assert rho_squared(hilbert(c_p=1.0), consts()) == 0.125
    assert rho_squared(hilbert(c_p=2.0), consts()) == 1.0
    assert rho_squared(hilbert(), consts(L=0.0)) == math.inf
    assert rho_squared(hilbert(), consts(L=math.inf)) == 0.0
    with pytest.raises(ValueError):
        rho_squared(hilbert(), consts(eps=0.0))


def test_beta_admissible_max():
    assert beta_admissible_max(hilbert(c_p=5.0)) == pytest.approx(0.375, rel=1e-15)
    with pytest.raises(InfeasibleError):
        beta_admissible_max(hilbert(c_p=2.0))
    # large C_p gives a bound above 1, so the user beta_max < 1 wins
    big = 2.0 + 8 * 2.0**3 * 2.0
    assert beta_admissible_max(hilbert(c_p=big)) >= 1.0
    assert effective_beta_max(hilbert(c_p=big), 0.4) == 0.4
    assert effective_beta_max(hilbert(c_p=1.0), 0.4) == 0.4


def test_rate_constants_examples():
    rc = rate_constants(hilbert(), consts(), 0.25, 0.1)
    assert rc.k1 == pytest.approx(0.0625, rel=1e-15)
    assert rc.alpha(0.0) == 1.0
    assert rc.alpha_k == 1.0
    for eps in (0.0, 0.3, 1.0):
        c = consts(L=0.1, cf=1.0, eps=eps)
        r = rate_constants(hilbert(c_p=4.0), c, 0.2, 0.1)
        assert r.k2 == r.k1
    assert rc.k5 == pytest.approx(rc.k3 + rc.k4)
    assert rc.t == 0.0


def test_rate_constants_rejects_bad_mu():
    with pytest.raises(InfeasibleError):
        rate_constants(hilbert(), consts(), 0.5, 0.1)
    with pytest.raises(ValueError):
        rate_constants(hilbert(), consts(), 0.2, math.inf)


def test_k1_positive_inside_bound():
    for p, c_p, g_q in [(2.0, 1.0, 1.0), (3.0, 0.4, 1.5), (1.5, 0.2, 3.0)]:
        sp = SpaceGeometry(1, p, c_p=c_p, g_q=g_q)
        c = consts(L=0.2, lhat=1.3, cf=0.7, eps=0.5)
        bound = mu_max(sp, c)
        for frac in (1e-6, 0.1, 0.5, 0.9, 0.999):
            assert rate_constants(sp, c, frac * bound, 0.01).k1 > 0


def test_alpha_tends_to_one():
    sp = SpaceGeometry(1, 3.0, c_p=0.4, g_q=1.5)
    rc = rate_constants(sp, consts(eps=0.5), 0.01, 0.01)
    p, q, c_p, g = 3.0, 1.5, 0.4, 1.5
    cap = 1 / c_p + 1 + 2 ** (p + q - 2) * (g / q) * (p / c_p)
    for beta in np.geomspace(1e-8, 1.0, 30):
        assert abs(rc.alpha(beta) - 1.0) <= beta * cap


def test_m1_is_positive_under_eps0_bound():
    sp = hilbert(c_p=1.0)
    c = consts(L=2.0, lhat=2.5, cf=0.5, eps=0.0)
    bound = mu_max_eps0(sp, c)
    for frac in (0.1, 0.5, 0.9):
        assert rate_constants(sp, c, frac * bound, 0.03).m1 > 0


def test_problem_constants_validation():
    with pytest.raises(ValueError):
        ProblemConstants(-1.0, 1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        ProblemConstants(1.0, 0.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        ProblemConstants(1.0, 1.0, 1.0, 1.5)
    ProblemConstants(0.0, 1.0, 1.0, 0.0)
    ProblemConstants(math.inf, 1.0, 1.0, 1.0)


def test_pure_and_deterministic():
    sp = SpaceGeometry(1, 3.0, c_p=0.4, g_q=1.5)
    c = consts(L=0.3, eps=0.4)
    a = rate_constants(sp, c, 0.01, 0.02)
    b = rate_constants(sp, c, 0.01, 0.02)
    assert a == b
    assert kappa_p(2.7) == kappa_p(2.7)
