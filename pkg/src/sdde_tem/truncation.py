"""Growth-bound profiles, the step-size budget h(dt) and the radial truncation map."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, ParameterError, ProfileError

# |x| within this relative margin of the bound counts as inside (no rescale).
INSIDE_RTOL = 1e-15

BISECT_LO = 1.0
BISECT_HI = 1e12
BISECT_ITERS = 200


class ProfileKind(enum.Enum):
    GENERIC = "generic"
    STABILITY = "stability"


def bisect_inverse(phi: Callable[[float], float], value: float,
                   lo: float = BISECT_LO, hi: float = BISECT_HI,
                   iters: int = BISECT_ITERS) -> float:
    """Solve phi(l) = value for l in [lo, hi] with phi increasing."""
    if value < phi(lo):
        raise ProfileError(f"{value} lies below phi({lo}) = {phi(lo)}")
    if value > phi(hi):
        raise ProfileError(f"{value} lies above phi({hi}); cannot invert")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if phi(mid) < value:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TruncationProfile:
    """Phi, its inverse, the exponent mu and K = Phi(max(|xi|, 1))."""

    phi: Callable[[float], float]
    phi_inv: Callable[[float], float]
    mu: float
    k_const: float
    kind: ProfileKind
    label: str = ""

    def __post_init__(self):
        if self.kind is ProfileKind.STABILITY:
            if not 0.0 < self.mu < 0.5:
                raise ParameterError(
                    f"stability profiles need 0 < mu < 1/2 strictly, got mu={self.mu}"
                )
        elif not 0.0 < self.mu <= 0.5:
            raise ParameterError(f"generic profiles need 0 < mu <= 1/2, got mu={self.mu}")
        if not self.k_const > 0:
            raise ProfileError(f"K must be positive, got {self.k_const}")


def make_profile(phi, mu, xi_sup, kind=ProfileKind.GENERIC, phi_inv=None, label=""):
    """Build a profile, falling back to bisection when no closed-form inverse is given."""
    if xi_sup < 0:
        raise ParameterError("xi_sup must be nonnegative")
    if phi_inv is None:
        def phi_inv(v, _phi=phi):
            return bisect_inverse(_phi, v)
    k = float(phi(max(float(xi_sup), 1.0)))
    return TruncationProfile(phi=phi, phi_inv=phi_inv, mu=float(mu), k_const=k,
                             kind=kind, label=label)


def h(profile: TruncationProfile, dt: float) -> float:
    """Step-size budget K * dt**(-mu) for dt in (0, 1]."""
    if not 0.0 < dt <= 1.0:
        raise DomainError(f"step size must lie in (0, 1], got {dt}")
    return profile.k_const * dt ** (-profile.mu)


def truncation_bound(profile: TruncationProfile, dt: float) -> float:
    """Radius Phi^{-1}(h(dt)) of the ball the truncated scheme projects onto."""
    budget = h(profile, dt)
    floor = profile.phi(1.0)
    if budget < floor * (1.0 - 1e-12):
        raise ProfileError(f"h({dt}) = {budget} is below phi(1) = {floor}")
    return float(profile.phi_inv(max(budget, floor)))


def _row_norms(x: np.ndarray) -> np.ndarray:
    if x.shape[-1] == 1:
        return np.abs(x[..., 0])
    with np.errstate(over="ignore"):
        norms = np.sqrt(np.sum(x * x, axis=-1))
    bad = ~np.isfinite(norms)
    if np.any(bad):
        # overflow in the squares; rescale by the largest entry
        big = np.max(np.abs(x[bad]), axis=-1)
        norms[bad] = big * np.sqrt(np.sum((x[bad] / big[..., None]) ** 2, axis=-1))
    return norms


def truncate_rows(x: np.ndarray, bound: float):
    """Radially clamp each row of ``x`` (trailing axis = state) to norm ``bound``.

    Returns ``(clamped, norms, mask)`` where ``mask`` flags rescaled rows.
    Rows already inside the ball are returned bit-for-bit unchanged.
    """
    norms = _row_norms(x)
    mask = norms > bound * (1.0 + INSIDE_RTOL)
    if not np.any(mask):
        return x, norms, mask
    scale = np.ones_like(norms)
    scale[mask] = bound / norms[mask]
    return x * scale[..., None], norms, mask


def truncate(x, bound: float) -> np.ndarray:
    """(|x| ^ bound) x/|x|, with the zero vector mapped to itself."""
    if not bound > 0:
        raise ParameterError(f"bound must be positive, got {bound}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("cannot truncate a non-finite vector; the step has blown up")
    out, _, _ = truncate_rows(x.reshape(1, -1), bound)
    return out.reshape(x.shape)


def polynomial_profile(alpha: float, k4: float, f00_norm: float, g00_norm: float,
                       q: float, r: float, xi_sup: float) -> TruncationProfile:
    """Generic profile for coefficients with polynomial growth of degree alpha.

    Phi(l) = c0 + 6 k4 l^(alpha+2) with c0 = max(|f(0,0)|, 2|g(0,0)|^2), and
    mu = r (alpha + 2) / (2 (q - r)).
    """
    if not (alpha > 0 and k4 > 0 and q > 0):
        raise ParameterError("alpha, k4 and q must be positive")
    if f00_norm < 0 or g00_norm < 0:
        raise ParameterError("|f(0,0)| and |g(0,0)| must be nonnegative")
    r_max = min(q / (alpha + 3.0), q / (2.0 * alpha))
    if not 2.0 <= r <= r_max * (1 + 1e-12):
        raise ParameterError(
            f"r={r} violates 2 <= r <= min(q/(alpha+3), q/(2 alpha)) = {r_max:g}"
        )
    mu = r * (alpha + 2.0) / (2.0 * (q - r))
    if not 0.0 < mu <= 0.5 * (1 + 1e-12):
        raise ParameterError(f"mu = r(alpha+2)/(2(q-r)) = {mu:g} is not in (0, 1/2]")
    mu = min(mu, 0.5)
    c0 = max(f00_norm, 2.0 * g00_norm**2)
    expo = alpha + 2.0
    coef = 6.0 * k4

    def phi(l):
        return c0 + coef * l**expo

    def phi_inv(v):
        return ((v - c0) / coef) ** (1.0 / expo)

    label = f"polynomial:alpha={alpha:g},k4={k4:g},q={q:g},r={r:g}"
    return make_profile(phi, mu, xi_sup, ProfileKind.GENERIC, phi_inv=phi_inv, label=label)


def stability_profile(phi_hat: Callable[[float], float], mu: float, xi_sup: float,
                      phi_inv: Optional[Callable[[float], float]] = None) -> TruncationProfile:
    """Profile for the stability-preserving scheme; mu must satisfy 0 < mu < 1/2."""
    if not 0.0 < mu < 0.5:
        raise ParameterError(f"stability profile needs 0 < mu < 1/2 strictly, got {mu}")
    return make_profile(phi_hat, mu, xi_sup, ProfileKind.STABILITY, phi_inv=phi_inv,
                        label=f"stability:mu={mu:g}")


def infinite_profile(kind: ProfileKind = ProfileKind.GENERIC) -> TruncationProfile:
    """A profile whose truncation radius is +inf; the scheme then reduces to plain EM."""
    return TruncationProfile(
        phi=lambda l: l, phi_inv=lambda v: math.inf, mu=0.25, k_const=1.0,
        kind=kind, label="inactive",
    )
