import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import brentq

from sdde_tem.errors import DomainError, ParameterError, ProfileError
from sdde_tem.model import builtin_example_1, builtin_example_2
from sdde_tem.truncation import (
    ProfileKind,
    bisect_inverse,
    h,
    make_profile,
    polynomial_profile,
    stability_profile,
    truncate,
    truncation_bound,
)

EX1 = builtin_example_1().recommended_profile
EX2 = builtin_example_2().recommended_profile
K_HAT = 2 * (1 + math.exp(2.6))


def test_h_examples():
    assert h(EX1, 2**-4) == pytest.approx(288.0, rel=1e-14)
    assert h(EX2, 1.0) == pytest.approx(28.927, abs=5e-4)
    assert h(EX2, 1.0) == EX2.k_const
    assert h(EX1, 1.0) == EX1.k_const


@pytest.mark.parametrize("dt", [0.0, -0.1, 1.5])
def test_h_domain(dt):
    with pytest.raises(DomainError):
        h(EX1, dt)


def test_bound_example1():
    assert truncation_bound(EX1, 2**-4) == pytest.approx(4**0.25, rel=1e-14)
    assert truncation_bound(EX1, 1.0) == pytest.approx(1.0, rel=1e-14)


def test_bound_example2_against_brentq():
    target = K_HAT * 2 ** (7 / 100)
    oracle = brentq(lambda l: 2 * (1 + l * l) - target, 1.0, 100.0, xtol=1e-15)
    assert oracle == pytest.approx(3.766, abs=5e-4)
    assert truncation_bound(EX2, 2**-7) == pytest.approx(oracle, rel=1e-12)
    # dt = 1 returns |xi| exactly (up to the inverse's rounding)
    assert truncation_bound(EX2, 1.0) == pytest.approx(math.exp(1.3), rel=1e-14)


def test_bound_dominates_initial_data():
    for prof, xi in ((EX1, 1.0), (EX2, math.exp(1.3))):
        for dt in np.geomspace(1e-8, 1.0, 50):
            assert truncation_bound(prof, dt) >= max(xi, 1.0) * (1 - 1e-14)


def test_truncate_examples():
    np.testing.assert_allclose(truncate([3.0, 4.0], 2.5), [1.5, 2.0], rtol=1e-15)
    np.testing.assert_array_equal(truncate([0.0, 0.0], 0.1), [0.0, 0.0])
    np.testing.assert_array_equal(truncate([1.0, 0.0], 7.0), [1.0, 0.0])


def test_truncate_rejects_nonfinite():
    with pytest.raises(DomainError):
        truncate([np.inf, 0.0], 1.0)
    with pytest.raises(ParameterError):
        truncate([1.0], 0.0)


def test_truncate_boundary_tolerance():
    x = np.array([1.0 + 5e-16])
    np.testing.assert_array_equal(truncate(x, 1.0), x)


vectors = arrays(np.float64, st.integers(1, 5),
                 elements=st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False))
bounds = st.floats(1e-3, 1e4)


@settings(max_examples=400, deadline=None)
@given(vectors, bounds)
def test_truncate_properties(x, b):
    y = truncate(x, b)
    np.testing.assert_array_equal(truncate(y, b), y)
    nx = np.linalg.norm(x)
    assert np.linalg.norm(y) == pytest.approx(min(nx, b), rel=1e-12, abs=0)
    if nx > 0:
        i = np.argmax(np.abs(x))
        c = y[i] / x[i]
        assert 0 < c <= 1
        np.testing.assert_allclose(y, c * x, rtol=1e-12, atol=1e-300)


def test_polynomial_profile_example1():
    p = polynomial_profile(2, 12, 0, 0, 15, 3, 1.0)
    assert p.kind is ProfileKind.GENERIC
    assert p.mu == 0.5
    assert p.k_const == 72.0
    for l in (1.0, 2.0, 3.5):
        assert p.phi(l) == pytest.approx(72 * l**4, rel=1e-15)
        assert p.phi_inv(72 * l**4) == pytest.approx(l, rel=1e-14)
    assert p.phi_inv(p.phi(5.0)) == pytest.approx(5.0, rel=1e-14)
    for l in (1, 2, 10, 100):
        assert p.phi_inv(p.phi(l)) == pytest.approx(l, rel=1e-10)


def test_polynomial_profile_offset():
    p = polynomial_profile(1.0, 2.0, f00_norm=3.0, g00_norm=2.0, q=20.0, r=2.0, xi_sup=0.5)
    # c0 = max(3, 2 * 4) = 8, Phi(l) = 8 + 12 l^3
    assert p.phi(1.0) == 20.0
    assert p.k_const == 20.0
    assert p.mu == pytest.approx(2 * 3 / (2 * 18))
    for l in np.geomspace(1, 1e6, 30):
        assert p.phi_inv(p.phi(l)) == pytest.approx(l, rel=1e-10)


def test_polynomial_profile_rejects_bad_r_and_mu():
    with pytest.raises(ParameterError, match="r="):
        polynomial_profile(2, 12, 0, 0, 15, 4, 1.0)
    with pytest.raises(ParameterError):
        polynomial_profile(2, 12, 0, 0, 15, 1.5, 1.0)
    # r <= q/(alpha+3) already forces mu <= 1/2
    p = polynomial_profile(0.5, 1.0, 0, 0, 7.0, 2.0, 1.0)
    assert p.mu == pytest.approx(0.5)


def test_stability_profile_example2():
    assert EX2.kind is ProfileKind.STABILITY
    assert EX2.k_const == pytest.approx(K_HAT, rel=1e-14)
    assert EX2.phi(1.0) == 4.0
    bisected = stability_profile(lambda l: 2 * (1 + l * l), 0.01, math.exp(1.3))
    assert bisected.phi_inv(4.0) == pytest.approx(1.0, abs=1e-10)
    for dt in (1.0, 2**-4, 2**-7, 2**-12):
        assert truncation_bound(bisected, dt) == pytest.approx(truncation_bound(EX2, dt), rel=1e-12)


def test_stability_profile_rejects_half():
    with pytest.raises(ParameterError):
        stability_profile(lambda l: l, 0.5, 1.0)
    with pytest.raises(ParameterError):
        stability_profile(lambda l: l, 0.0, 1.0)


def test_bisection_inverse_roundtrip():
    phi = lambda l: 3.0 + l**1.7  # noqa: E731
    for l in np.geomspace(1, 1e6, 25):
        assert bisect_inverse(phi, phi(l)) == pytest.approx(l, rel=1e-10)
    with pytest.raises(ProfileError):
        bisect_inverse(phi, 1.0)


def test_profile_inverse_below_domain():
    p = make_profile(lambda l: 10 * l, 0.25, 0.0, phi_inv=lambda v: v / 10)
    assert p.k_const == 10.0
    assert truncation_bound(p, 0.5) == pytest.approx(2**0.25)
