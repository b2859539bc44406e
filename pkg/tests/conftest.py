import numpy as np
import pytest

from sdde_tem.model import SddeModel


@pytest.fixture
def zero_model():
    def make(c=(0.5,), m=1):
        c = np.asarray(c, dtype=float)
        d = c.size
        return SddeModel(
            state_dim=d, noise_dim=m, delay=1.0,
            drift=lambda x, y: np.zeros_like(x),
            diffusion=lambda x, y: np.zeros(np.shape(x) + (m,)),
            initial_segment=lambda th: c.copy(),
            initial_sup_norm=float(np.linalg.norm(c)),
        )
    return make


@pytest.fixture
def pure_diffusion():
    """dx = dW, x(0) = 0: E|x(t)|^2 = t."""
    return SddeModel(
        state_dim=1, noise_dim=1, delay=1.0,
        drift=lambda x, y: np.zeros_like(x),
        diffusion=lambda x, y: np.ones(np.shape(x) + (1,)),
        initial_segment=lambda th: np.zeros(1),
        initial_sup_norm=0.0,
    )
