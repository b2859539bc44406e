"""Explicit time-steppers over a delay-history ring buffer.

Three schemes share one update ``pre = z_i + f(z_i, z_{i-N}) dt + g(z_i, z_{i-N}) dW_i``:

* ``GENERIC_TEM``   -- project ``pre`` onto the ball of radius Phi^{-1}(h(dt));
* ``STABILITY_TEM`` -- same algebra, radius taken from a stability profile;
* ``CLASSIC_EM``    -- no projection; non-finite values are flagged, not raised.

:class:`PathEnsemble` advances many Monte Carlo paths at once (one row per
path); the single-path helpers are thin wrappers around the same arithmetic.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .brownian import BrownianLattice, aggregate, grid_ratio, steps_in
from .errors import BlowUpError, DomainError, GridAlignmentError, ParameterError
from .model import SddeModel
from .truncation import ProfileKind, TruncationProfile, truncate_rows, truncation_bound


class SchemeKind(enum.Enum):
    GENERIC_TEM = "tem"
    STABILITY_TEM = "stab-tem"
    CLASSIC_EM = "em"


_PROFILE_FOR = {
    SchemeKind.GENERIC_TEM: ProfileKind.GENERIC,
    SchemeKind.STABILITY_TEM: ProfileKind.STABILITY,
}


@dataclass(frozen=True)
class SimulationGrid:
    dt: float
    steps_per_delay: int
    horizon_steps: int
    delay: float

    @property
    def horizon(self) -> float:
        return self.horizon_steps * self.dt

    def time(self, i: int) -> float:
        return i * self.dt

    def times(self, start: int = 0) -> np.ndarray:
        return np.arange(start, self.horizon_steps + 1) * self.dt


def make_grid(delay: float, n: int, horizon: float) -> SimulationGrid:
    """Grid with dt = delay / n; the step must not exceed 1."""
    if int(n) != n or n < 1:
        raise ParameterError(f"steps per delay must be a positive integer, got {n}")
    if not delay > 0 or not horizon > 0:
        raise ParameterError("delay and horizon must be positive")
    dt = delay / n
    if dt > 1.0:
        raise DomainError(f"dt = delay/n = {dt} exceeds 1; increase n")
    return SimulationGrid(dt=dt, steps_per_delay=int(n),
                          horizon_steps=steps_in(horizon, dt), delay=float(delay))


def resolve_bound(profile: Optional[TruncationProfile], kind: SchemeKind, dt: float) -> float:
    if kind is SchemeKind.CLASSIC_EM:
        return math.inf
    if profile is None:
        raise ParameterError(f"scheme {kind.value} needs a truncation profile")
    if profile.kind is not _PROFILE_FOR[kind]:
        raise ParameterError(
            f"scheme {kind.value} cannot run with a {profile.kind.value} profile"
        )
    return truncation_bound(profile, dt)


def euler_update(model: SddeModel, x: np.ndarray, y: np.ndarray, dt: float,
                 dw: np.ndarray) -> np.ndarray:
    """z + f(z, z_delayed) dt + g(z, z_delayed) dW, batched over leading axes."""
    g = model.diffusion(x, y)
    if g.shape[-1] == 1:
        noise = g[..., 0] * dw
    else:
        noise = np.matmul(g, dw[..., None])[..., 0]
    return x + model.drift(x, y) * dt + noise


def _split_history(model, history):
    history = np.asarray(history, dtype=float).reshape(-1, model.state_dim)
    return history[-1], history[0]


def tem_step(model, profile, grid, history, dW, step_index=None):
    """One truncated step; ``history`` holds z_{i-N} ... z_i (oldest first).

    Returns ``(pre, post)``.
    """
    return _truncated_step(model, profile, grid, history, dW, SchemeKind.GENERIC_TEM, step_index)


def stability_tem_step(model, profile, grid, history, dW, step_index=None):
    return _truncated_step(model, profile, grid, history, dW, SchemeKind.STABILITY_TEM, step_index)


def _truncated_step(model, profile, grid, history, dW, kind, step_index):
    bound = resolve_bound(profile, kind, grid.dt)
    x, y = _split_history(model, history)
    pre = euler_update(model, x, y, grid.dt, np.asarray(dW, dtype=float))
    if not np.all(np.isfinite(pre)):
        raise BlowUpError(step_index if step_index is not None else -1)
    post, _, _ = truncate_rows(pre[None, :], bound)
    return pre, post[0]


def em_step(model, grid, history, dW) -> np.ndarray:
    x, y = _split_history(model, history)
    with np.errstate(all="ignore"):
        return euler_update(model, x, y, grid.dt, np.asarray(dW, dtype=float))


@dataclass
class StepBlock:
    """Per-step observables for a block of k steps over P paths."""

    post: np.ndarray        # (k, P, d)
    pre_norm: np.ndarray    # (k, P)
    truncated: np.ndarray   # (k, P) bool
    nonfinite: np.ndarray   # (k, P) bool


class PathEnsemble:
    """Advances P paths of one scheme in lockstep.

    The ring buffer holds z_{i-N} ... z_i; slot ``j % (N + 1)`` stores z_j.
    ``path_offset`` only labels paths in blow-up diagnostics.
    """

    def __init__(self, model: SddeModel, grid: SimulationGrid, kind: SchemeKind,
                 profile: Optional[TruncationProfile] = None, n_paths: int = 1,
                 path_offset: int = 0, bound: Optional[float] = None):
        self.model = model
        self.grid = grid
        self.kind = kind
        self.n_paths = n_paths
        self.path_offset = path_offset
        self.bound = resolve_bound(profile, kind, grid.dt) if bound is None else float(bound)
        n = grid.steps_per_delay
        self._slots = n + 1
        self.ring = np.empty((n + 1, n_paths, model.state_dim))
        for i in range(-n, 1):
            self.ring[i % (n + 1)] = model.initial_value(i * grid.dt)
        self.step = 0
        self.pre_last = self.ring[0].copy()

    @property
    def current(self) -> np.ndarray:
        return self.ring[self.step % self._slots]

    @property
    def finished(self) -> bool:
        return self.step >= self.grid.horizon_steps

    def advance(self, dW: np.ndarray, keep: bool = False) -> Optional[StepBlock]:
        """Take ``len(dW)`` steps; ``dW`` has shape (k, P, noise_dim)."""
        k = dW.shape[0]
        if self.step + k > self.grid.horizon_steps:
            raise GridAlignmentError("increments run past the simulation horizon")
        model, dt, bound, slots = self.model, self.grid.dt, self.bound, self._slots
        truncating = self.kind is not SchemeKind.CLASSIC_EM
        if keep:
            block = StepBlock(
                post=np.empty((k, self.n_paths, model.state_dim)),
                pre_norm=np.empty((k, self.n_paths)),
                truncated=np.zeros((k, self.n_paths), dtype=bool),
                nonfinite=np.zeros((k, self.n_paths), dtype=bool),
            )
        ring = self.ring
        for j in range(k):
            i = self.step
            x = ring[i % slots]
            y = ring[(i + 1) % slots]
            if truncating:
                pre = euler_update(model, x, y, dt, dW[j])
                finite = np.isfinite(pre).all(axis=-1)
                if not finite.all():
                    bad = np.flatnonzero(~finite) + self.path_offset
                    raise BlowUpError(i + 1, bad, f"scheme {self.kind.value}, dt={dt:g}")
                post, norms, mask = truncate_rows(pre, bound)
            else:
                with np.errstate(all="ignore"):
                    pre = euler_update(model, x, y, dt, dW[j])
                    norms = np.sqrt(np.sum(pre * pre, axis=-1))
                post = pre
                mask = None
            ring[(i + 1) % slots] = post
            self.step = i + 1
            if keep:
                block.post[j] = post
                block.pre_norm[j] = norms
                if mask is not None:
                    block.truncated[j] = mask
                else:
                    block.nonfinite[j] = ~np.isfinite(pre).all(axis=-1)
        self.pre_last = pre.copy() if k else self.pre_last
        return block if keep else None


@dataclass
class PathTrajectory:
    """Discrete iterates z_{-N} ... z_{horizon_steps} of one path.

    ``pre_norms``, ``truncated`` and ``nonfinite`` are indexed by step
    0 ... horizon_steps; entry 0 describes the initial value.
    """

    grid: SimulationGrid
    states: np.ndarray
    pre_norms: np.ndarray
    truncated: np.ndarray
    nonfinite: np.ndarray
    pre_truncation_last: np.ndarray
    scheme_kind: SchemeKind
    bound: float

    def state(self, i: int) -> np.ndarray:
        return self.states[i + self.grid.steps_per_delay]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times(start=-self.grid.steps_per_delay)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    @property
    def diverged(self) -> bool:
        return bool(self.nonfinite.any())


def _lattice_increments(lattice: BrownianLattice, grid: SimulationGrid) -> np.ndarray:
    k = grid_ratio(grid.dt, lattice.fine_dt)
    need = grid.horizon_steps * k
    if lattice.n_fine < need:
        raise GridAlignmentError(
            f"lattice covers {lattice.n_fine} fine steps, simulation needs {need}"
        )
    return aggregate(lattice.increments[:need], k)


def simulate(model: SddeModel, profile: Optional[TruncationProfile], grid: SimulationGrid,
             scheme_kind: SchemeKind, lattice: BrownianLattice,
             bound: Optional[float] = None) -> PathTrajectory:
    """Run one path to the horizon using the lattice's increments aggregated to ``grid.dt``.

    ``bound`` overrides the profile's truncation radius (useful for tests).
    """
    if lattice.noise_dim != model.noise_dim:
        raise ParameterError("lattice noise_dim does not match the model")
    dW = _lattice_increments(lattice, grid)
    ens = PathEnsemble(model, grid, scheme_kind, profile, n_paths=1,
                       path_offset=lattice.path_index, bound=bound)
    n = grid.steps_per_delay
    history = np.array([model.initial_value(i * grid.dt) for i in range(-n, 1)])
    block = ens.advance(dW[:, None, :], keep=True)
    states = np.concatenate([history, block.post[:, 0, :]])
    z0 = float(np.linalg.norm(history[-1]))
    return PathTrajectory(
        grid=grid,
        states=states,
        pre_norms=np.concatenate([[z0], block.pre_norm[:, 0]]),
        truncated=np.concatenate([[False], block.truncated[:, 0]]),
        nonfinite=np.concatenate([[False], block.nonfinite[:, 0]]),
        pre_truncation_last=ens.pre_last[0],
        scheme_kind=scheme_kind,
        bound=ens.bound,
    )


def interpolate_aux(trajectory: PathTrajectory, model: SddeModel,
                    lattice: BrownianLattice, t: float) -> np.ndarray:
    """Continuous interpolant z_i + f(z_i, z_{i-N})(t - t_i) + g(z_i, z_{i-N})(W(t) - W(t_i)).

    ``t`` must lie on the lattice's fine grid.  At grid times the stored state
    is returned exactly.
    """
    grid = trajectory.grid
    k = grid_ratio(grid.dt, lattice.fine_dt)
    j = lattice.fine_index(t)
    i, rem = divmod(j, k)
    if i > grid.horizon_steps or (i == grid.horizon_steps and rem):
        raise GridAlignmentError(f"t={t} lies beyond the simulated horizon")
    if rem == 0:
        return trajectory.state(i).copy()
    x = trajectory.state(i)
    y = trajectory.state(i - grid.steps_per_delay)
    dw = aggregate(lattice.increments[i * k:j], rem)[0]
    return euler_update(model, x, y, rem * lattice.fine_dt, dw)
