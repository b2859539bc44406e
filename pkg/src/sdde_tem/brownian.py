"""Seeded Brownian increments on a fine dyadic grid, aggregable to coarser grids.

Every Monte Carlo path owns an independent generator derived from
``(seed, path_index)`` through :class:`numpy.random.SeedSequence`, so results
do not depend on how paths are batched or scheduled.  Increments are drawn in
step-major order (all ``noise_dim`` coordinates of step 0, then step 1, ...).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from .errors import GridAlignmentError, ParameterError

_ALIGN_RTOL = 1e-9


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    """Independent generator for one path of a batch."""
    if seed < 0 or path_index < 0:
        raise ParameterError("seed and path_index must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.PCG64(ss))


def steps_in(horizon: float, dt: float) -> int:
    """Number of dt-steps needed to reach ``horizon`` (ceil, tolerant to rounding)."""
    ratio = horizon / dt
    k = round(ratio)
    if abs(ratio - k) <= _ALIGN_RTOL * max(1.0, ratio):
        return int(k)
    return int(math.ceil(ratio))


def grid_ratio(coarse: float, fine: float) -> int:
    """Integer k with coarse == k * fine, or GridAlignmentError."""
    ratio = coarse / fine
    k = round(ratio)
    if k < 1 or abs(ratio - k) > _ALIGN_RTOL * ratio:
        raise GridAlignmentError(f"{coarse} is not an integer multiple of {fine}")
    return int(k)


def aggregate(fine: np.ndarray, k: int) -> np.ndarray:
    """Sum consecutive groups of ``k`` rows, strictly left to right.

    ``fine`` has shape (n, ...) with n divisible by k; the result has shape
    (n // k, ...).
    """
    n = fine.shape[0]
    if n % k:
        raise GridAlignmentError(f"{n} fine steps do not split into blocks of {k}")
    blocks = fine.reshape((n // k, k) + fine.shape[1:])
    acc = blocks[:, 0].copy()
    for j in range(1, k):
        acc += blocks[:, j]
    return acc


@dataclass(frozen=True)
class BrownianLattice:
    noise_dim: int
    fine_dt: float
    horizon: float
    seed: int
    path_index: int

    def __post_init__(self):
        if self.noise_dim < 1:
            raise ParameterError("noise_dim must be >= 1")
        if not self.fine_dt > 0:
            raise ParameterError("fine_dt must be positive")
        if self.horizon < self.fine_dt * (1 - _ALIGN_RTOL):
            raise ParameterError("horizon must be at least fine_dt")

    @property
    def n_fine(self) -> int:
        return steps_in(self.horizon, self.fine_dt)

    @cached_property
    def increments(self) -> np.ndarray:
        """Fine increments, shape (n_fine, noise_dim)."""
        rng = path_rng(self.seed, self.path_index)
        z = rng.standard_normal((self.n_fine, self.noise_dim))
        return z * math.sqrt(self.fine_dt)

    def fine_index(self, t: float) -> int:
        ratio = t / self.fine_dt
        j = round(ratio)
        if abs(ratio - j) > _ALIGN_RTOL * max(1.0, ratio):
            raise GridAlignmentError(f"t={t} is not on the fine grid (dt={self.fine_dt})")
        if not 0 <= j <= self.n_fine:
            raise GridAlignmentError(f"t={t} lies outside [0, {self.horizon}]")
        return int(j)

    def coarse_increments(self, coarse_dt: float) -> np.ndarray:
        """All increments on the coarse grid, shape (n_fine // k, noise_dim)."""
        k = grid_ratio(coarse_dt, self.fine_dt)
        n = (self.n_fine // k) * k
        return aggregate(self.increments[:n], k)


def generate(seed: int, path_index: int, noise_dim: int, fine_dt: float,
             horizon: float) -> BrownianLattice:
    lattice = BrownianLattice(noise_dim, fine_dt, horizon, seed, path_index)
    lattice.increments  # noqa: B018 -- draw eagerly
    return lattice


def coarse_increment(lattice: BrownianLattice, coarse_dt: float, step_index: int) -> np.ndarray:
    """W((s+1) coarse_dt) - W(s coarse_dt) as the ordered sum of fine increments."""
    k = grid_ratio(coarse_dt, lattice.fine_dt)
    start = step_index * k
    if step_index < 0 or start + k > lattice.n_fine:
        raise GridAlignmentError(f"coarse step {step_index} runs past the horizon")
    return aggregate(lattice.increments[start:start + k], k)[0]


def value_at(lattice: BrownianLattice, t: float) -> np.ndarray:
    """W(t) at a fine-grid time, with W(0) = 0."""
    j = lattice.fine_index(t)
    out = np.zeros(lattice.noise_dim)
    for row in lattice.increments[:j]:
        out += row
    return out


class BrownianBatch:
    """Streams fine increments for paths ``first .. first + count - 1``.

    The concatenation of the blocks yielded for one path is bit-identical to
    that path's :attr:`BrownianLattice.increments`.
    """

    def __init__(self, seed: int, first: int, count: int, noise_dim: int,
                 fine_dt: float, horizon: float):
        if count < 1:
            raise ParameterError("a batch needs at least one path")
        self.seed = seed
        self.first = first
        self.count = count
        self.noise_dim = noise_dim
        self.fine_dt = fine_dt
        self.n_fine = steps_in(horizon, fine_dt)

    def blocks(self, block_steps: int) -> Iterator[np.ndarray]:
        """Yield arrays of shape (b, count, noise_dim), b <= block_steps."""
        rngs = [path_rng(self.seed, self.first + p) for p in range(self.count)]
        scale = math.sqrt(self.fine_dt)
        done = 0
        while done < self.n_fine:
            b = min(block_steps, self.n_fine - done)
            out = np.empty((b, self.count, self.noise_dim))
            for p, rng in enumerate(rngs):
                out[:, p, :] = rng.standard_normal((b, self.noise_dim))
            out *= scale
            done += b
            yield out
