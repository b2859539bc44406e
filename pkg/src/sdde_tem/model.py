"""SDDE problem instances and the built-in model catalog.

Coefficient callables are *batched*: ``drift(x, y)`` receives arrays whose
trailing axis has length ``state_dim`` (any leading shape, typically one row
per Monte Carlo path) and returns an array of the same shape.
``diffusion(x, y)`` returns shape ``(..., state_dim, noise_dim)``.  The
initial segment is evaluated one time point at a time and returns a vector of
length ``state_dim``.

Vector norms are Euclidean and matrix norms Hilbert-Schmidt throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError
from .truncation import (
    ProfileKind,
    TruncationProfile,
    make_profile,
    polynomial_profile,
    stability_profile,
)

Coefficient = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SddeModel:
    """dx(t) = drift(x(t), x(t - delay)) dt + diffusion(...) dW(t), x = initial_segment on [-delay, 0].

    ``initial_sup_norm`` is stored rather than recomputed: the truncation
    constant depends on it exactly.
    """

    state_dim: int
    noise_dim: int
    delay: float
    drift: Coefficient
    diffusion: Coefficient
    initial_segment: Callable[[float], np.ndarray]
    initial_sup_norm: float

    def __post_init__(self):
        if self.state_dim < 1 or self.noise_dim < 1:
            raise ParameterError("state_dim and noise_dim must be >= 1")
        if not self.delay > 0:
            raise ParameterError(f"delay must be positive, got {self.delay}")
        if not self.initial_sup_norm >= 0:
            raise ParameterError("initial_sup_norm must be nonnegative")

    def initial_value(self, theta: float) -> np.ndarray:
        return np.asarray(self.initial_segment(theta), dtype=float).reshape(self.state_dim)

    def check_initial_segment(self, points: int = 1000, atol: float = 1e-12) -> float:
        """Sample the initial segment and return its max norm.

        Raises ParameterError when a sample is non-finite or exceeds the
        stored sup norm by more than ``atol``.
        """
        worst = 0.0
        for theta in np.linspace(-self.delay, 0.0, points):
            v = self.initial_value(theta)
            if not np.all(np.isfinite(v)):
                raise ParameterError(f"initial segment not finite at theta={theta}")
            worst = max(worst, float(np.linalg.norm(v)))
        if worst > self.initial_sup_norm + atol:
            raise ParameterError(
                f"sampled |xi| = {worst} exceeds initial_sup_norm = {self.initial_sup_norm}"
            )
        return worst


@dataclass(frozen=True)
class ModelCatalogEntry:
    name: str
    model: SddeModel
    recommended_profile: TruncationProfile
    notes: str = ""
    # per-model constants from the stability hypotheses (k6bar, k6, ...)
    constants: dict = field(default_factory=dict)
    exact: Optional[Callable[[float], np.ndarray]] = None


def _ex1_drift(x, y):
    return x - 8.0 * (x * x * x)


def _ex1_diffusion(x, y):
    return (np.abs(y) ** 1.5)[..., None]


def _ex1_initial(theta):
    return np.array([theta * theta])


def builtin_example_1() -> ModelCatalogEntry:
    """Scalar cubic-drift model with delayed |y|^{3/2} noise and xi(t) = t^2 on [-1, 0]."""
    model = SddeModel(
        state_dim=1,
        noise_dim=1,
        delay=1.0,
        drift=_ex1_drift,
        diffusion=_ex1_diffusion,
        initial_segment=_ex1_initial,
        initial_sup_norm=1.0,
    )
    profile = polynomial_profile(
        alpha=2.0, k4=12.0, f00_norm=0.0, g00_norm=0.0, q=15.0, r=3.0, xi_sup=1.0
    )
    notes = (
        "Global solution via Khasminskii condition with q=15; polynomial growth "
        "with alpha=2, K4=12; one-sided rate condition with r=3. "
        "Phi(l)=72 l^4, h(dt)=72 dt^(-1/2); expected L^3 error order 3/2."
    )
    return ModelCatalogEntry(
        "example1", model, profile, notes,
        constants={"alpha": 2.0, "k4": 12.0, "q": 15.0, "r": 3.0, "p_bar": 3.0},
    )


def _ex2_drift(x, y):
    out = np.empty_like(x)
    x1, x2 = x[..., 0], x[..., 1]
    out[..., 0] = -1.5 * x1 - x1 * x1 * x1
    out[..., 1] = -x2 - x2 * x2 * x2
    return out


def _ex2_diffusion(x, y):
    g = np.zeros(np.shape(y)[:-1] + (2, 2))
    g[..., 0, 0] = y[..., 1] * y[..., 1]
    g[..., 1, 1] = y[..., 0] * y[..., 0]
    return g


def _ex2_initial(theta):
    return np.array([math.exp(-1.3 * theta), 0.0])


def _ex2_phi(l):
    return 2.0 * (1.0 + l * l)


def _ex2_phi_inv(v):
    return math.sqrt(v / 2.0 - 1.0)


def builtin_example_2() -> ModelCatalogEntry:
    """Two-dimensional cubic-drift model with cross-delayed quadratic noise.

    Two independent Brownian motions drive the two components (m = 2).
    """
    xi_sup = math.exp(1.3)
    model = SddeModel(
        state_dim=2,
        noise_dim=2,
        delay=1.0,
        drift=_ex2_drift,
        diffusion=_ex2_diffusion,
        initial_segment=_ex2_initial,
        initial_sup_norm=xi_sup,
    )
    profile = stability_profile(_ex2_phi, mu=0.01, xi_sup=xi_sup, phi_inv=_ex2_phi_inv)
    notes = (
        "Exponentially stable in mean square and almost surely with "
        "V2(x)=x1^4+x2^4, K6bar=2, K6=0.6, K7bar=2, K7=1; gamma=0.69, epsilon=0.5 "
        "give the guaranteed decay rate 0.19 for dt <= 2^-7."
    )
    constants = {
        "k6bar": 2.0, "k6": 0.6, "k7bar": 2.0, "k7": 1.0,
        "gamma": 0.69, "epsilon": 0.5,
    }
    return ModelCatalogEntry("example2", model, profile, notes, constants=constants)


def oracle_linear_delay_model(rate: float) -> SddeModel:
    """dx = -rate * x dt, no noise, xi = 1: exact solution exp(-rate * t)."""
    if not rate > 0:
        raise ParameterError(f"rate must be positive, got {rate}")
    return SddeModel(
        state_dim=1,
        noise_dim=1,
        delay=1.0,
        drift=lambda x, y: -rate * x,
        diffusion=lambda x, y: np.zeros(np.shape(x) + (1,)),
        initial_segment=lambda theta: np.array([1.0]),
        initial_sup_norm=1.0,
    )


def linear_decay_entry(rate: float = 1.0) -> ModelCatalogEntry:
    model = oracle_linear_delay_model(rate)
    # |f(x)|/(1+|x|) <= rate, so Phi(l) = rate * l dominates on l >= 1.
    profile = make_profile(
        phi=lambda l: rate * l,
        phi_inv=lambda v: v / rate,
        mu=0.5,
        xi_sup=1.0,
        kind=ProfileKind.GENERIC,
        label=f"linear:rate={rate:g}",
    )
    return ModelCatalogEntry(
        "linear-decay", model, profile,
        notes="Deterministic test oracle; Euler order 1 against exp(-rate t).",
        exact=lambda t: np.array([math.exp(-rate * t)]),
    )


CATALOG = {
    "example1": builtin_example_1,
    "example2": builtin_example_2,
    "linear-decay": linear_decay_entry,
}


def get_entry(name: str) -> ModelCatalogEntry:
    try:
        return CATALOG[name]()
    except KeyError:
        raise ParameterError(
            f"unknown model {name!r}; choose one of {', '.join(CATALOG)}"
        ) from None
