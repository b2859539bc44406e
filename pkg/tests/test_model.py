import math

import numpy as np
import pytest

from sdde_tem.errors import ParameterError
from sdde_tem.model import (
    CATALOG,
    SddeModel,
    builtin_example_1,
    builtin_example_2,
    get_entry,
    oracle_linear_delay_model,
)


def test_example1_coefficients():
    m = builtin_example_1().model
    assert (m.state_dim, m.noise_dim, m.delay) == (1, 1, 1.0)
    assert m.drift(np.array([1.0]), np.array([0.0]))[0] == -7.0
    g = m.diffusion(np.array([0.0]), np.array([4.0]))
    assert g.shape == (1, 1) and g[0, 0] == 8.0
    assert m.initial_value(-1.0)[0] == 1.0
    assert m.initial_sup_norm == 1.0


def test_example1_profile():
    p = builtin_example_1().recommended_profile
    assert p.mu == 0.5
    assert p.k_const == pytest.approx(72.0, rel=1e-15)


def test_example1_drift_is_odd():
    m = builtin_example_1().model
    x = np.linspace(-3, 3, 101)[:, None]
    y = np.full_like(x, 0.7)
    np.testing.assert_array_equal(m.drift(-x, y), -m.drift(x, y))


def test_example2_coefficients():
    e = builtin_example_2()
    m = e.model
    assert (m.state_dim, m.noise_dim) == (2, 2)
    out = m.drift(np.array([1.0, 1.0]), np.array([5.0, -3.0]))
    np.testing.assert_array_equal(out, [-2.5, -2.0])
    g = m.diffusion(np.array([0.3, 0.1]), np.array([2.0, 3.0]))
    np.testing.assert_array_equal(g, [[9.0, 0.0], [0.0, 4.0]])
    assert m.initial_sup_norm == pytest.approx(3.6693, abs=1e-4)
    assert m.initial_sup_norm == math.exp(1.3)


def test_example2_diffusion_structure():
    m = builtin_example_2().model
    rng = np.random.default_rng(3)
    y = rng.normal(size=(200, 2))
    x = rng.normal(size=(200, 2))
    g = m.diffusion(x, y)
    assert np.all(np.count_nonzero(g, axis=(1, 2)) == 2)
    hs2 = np.sum(g**2, axis=(1, 2))
    np.testing.assert_allclose(hs2, y[:, 0] ** 4 + y[:, 1] ** 4, rtol=1e-14)


def test_linear_oracle():
    m = oracle_linear_delay_model(1.0)
    assert m.drift(np.array([2.0]), np.array([9.0]))[0] == -2.0
    assert np.all(m.diffusion(np.array([2.0]), np.array([9.0])) == 0)
    assert get_entry("linear-decay").exact(1.0)[0] == pytest.approx(0.367879, abs=1e-6)
    with pytest.raises(ParameterError):
        oracle_linear_delay_model(0.0)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_initial_segments(name):
    entry = get_entry(name)
    assert entry.name == name
    worst = entry.model.check_initial_segment(points=1000)
    assert worst <= entry.model.initial_sup_norm + 1e-12


def test_unknown_model():
    with pytest.raises(ParameterError):
        get_entry("nope")


def test_model_validation():
    kw = dict(drift=None, diffusion=None, initial_segment=lambda t: [0.0], initial_sup_norm=0.0)
    with pytest.raises(ParameterError):
        SddeModel(state_dim=1, noise_dim=1, delay=0.0, **kw)
    with pytest.raises(ParameterError):
        SddeModel(state_dim=0, noise_dim=1, delay=1.0, **kw)


def test_sup_norm_check_catches_understatement():
    m = SddeModel(1, 1, 1.0, None, None, lambda t: np.array([2.0]), 1.0)
    with pytest.raises(ParameterError):
        m.check_initial_segment()
