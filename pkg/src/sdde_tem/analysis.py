"""Monte Carlo estimators and parameter solvers for the truncated schemes.

All studies draw path ``p`` from the stream ``(seed, p)``, so adding paths
never changes the earlier ones and batching/threading does not change any
number.  Reductions over paths run in path-index order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .brownian import BrownianBatch, aggregate, grid_ratio
from .errors import DomainError, GridAlignmentError, ParameterError
from .model import SddeModel
from .scheme import PathEnsemble, SchemeKind, SimulationGrid, make_grid
from .truncation import TruncationProfile

DEFAULT_BATCH = 250
_BLOCK_STEPS = 4096


def _batches(samples: int, batch_size: int):
    if samples < 1:
        raise ParameterError("samples must be >= 1")
    if batch_size < 1:
        raise ParameterError("batch_size must be >= 1")
    return [(s, min(batch_size, samples - s)) for s in range(0, samples, batch_size)]


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _mean_stderr(samples: np.ndarray, axis: int = 0):
    n = samples.shape[axis]
    mean = np.mean(samples, axis=axis)
    if n < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, np.std(samples, axis=axis, ddof=1) / math.sqrt(n)


def grid_for_step(model: SddeModel, dt: float, horizon: float) -> SimulationGrid:
    """Grid for a raw step size, which must divide the delay."""
    n = grid_ratio(model.delay, dt)
    return make_grid(model.delay, n, horizon)


# --------------------------------------------------------------------------
# regression helpers

def rate_regress(points: Sequence[Tuple[float, float]]) -> Tuple[float, float, float]:
    """OLS of log2(error) on log2(dt): returns (slope, intercept, 2 * stderr(slope))."""
    if len(points) < 3:
        raise ParameterError("rate regression needs at least 3 points")
    dts = np.array([p[0] for p in points], dtype=float)
    errs = np.array([p[1] for p in points], dtype=float)
    if np.any(dts <= 0) or np.any(~(errs > 0)):
        raise DomainError("step sizes and errors must all be positive")
    fit = stats.linregress(np.log2(dts), np.log2(errs))
    return float(fit.slope), float(fit.intercept), 2.0 * float(fit.stderr)


def log_linear_slope(times, values, window=None) -> Tuple[float, float, bool]:
    """Slope and intercept of ln(values) against times over ``window``.

    Returns ``(-inf, nan, True)`` when a value inside the window is exactly 0.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is not None:
        lo, hi = window
        sel = (times >= lo - 1e-12) & (times <= hi + 1e-12)
        times, values = times[sel], values[sel]
    if times.size < 2:
        raise ParameterError("fit window contains fewer than two time points")
    if np.any(values == 0.0):
        return -math.inf, math.nan, True
    if np.any(~(values > 0)):
        raise DomainError("cannot take the log of negative or non-finite values")
    fit = stats.linregress(times, np.log(values))
    return float(fit.slope), float(fit.intercept), False


# --------------------------------------------------------------------------
# strong error

@dataclass
class ErrorRow:
    dt: float
    sample_count: int
    error: float
    stderr: float


@dataclass
class StrongErrorReport:
    order_p: float
    T: float
    ref_dt: float
    rows: List[ErrorRow]
    fitted_slope: float
    slope_ci_halfwidth: float
    intercept: float = math.nan
    seed: int = 0
    per_path: Optional[np.ndarray] = field(default=None, repr=False)  # (samples, len(rows))


def strong_error_study(model: SddeModel, profile: Optional[TruncationProfile], T: float,
                       p_bar: float, dt_list: Sequence[float], ref_n: int, samples: int,
                       seed: int, scheme_kind: SchemeKind = SchemeKind.GENERIC_TEM,
                       batch_size: int = DEFAULT_BATCH, threads: int = 1,
                       log=None) -> StrongErrorReport:
    """Estimate E|x_ref(T) - z_dt(T)|^p_bar with every step size driven by the same Brownian path.

    The reference solution uses dt = delay / ref_n; every step in ``dt_list``
    must be an integer multiple of it and divide ``T``.
    """
    if not p_bar > 0:
        raise ParameterError("p_bar must be positive")
    ref_grid = make_grid(model.delay, ref_n, T)
    ref_dt = ref_grid.dt
    grids, ratios = [], []
    for dt in dt_list:
        k = grid_ratio(dt, ref_dt)
        n, rem = divmod(ref_n, k)
        if rem:
            raise GridAlignmentError(f"dt={dt} does not divide the delay on the reference grid")
        g = make_grid(model.delay, n, T)
        if g.horizon_steps * k != ref_grid.horizon_steps:
            raise GridAlignmentError(f"T={T} is not a multiple of dt={g.dt}")
        grids.append(g)
        ratios.append(k)
    if not grids:
        raise ParameterError("dt_list is empty")
    block = math.lcm(*ratios)
    block *= max(1, _BLOCK_STEPS // block)

    def run(batch):
        first, count = batch
        ref = PathEnsemble(model, ref_grid, scheme_kind, profile, count, first)
        levels = [PathEnsemble(model, g, scheme_kind, profile, count, first) for g in grids]
        source = BrownianBatch(seed, first, count, model.noise_dim, ref_dt, T)
        for fine in source.blocks(block):
            ref.advance(fine)
            for lvl, k in zip(levels, ratios):
                lvl.advance(fine if k == 1 else aggregate(fine, k))
        diffs = [np.linalg.norm(ref.current - lvl.current, axis=-1) ** p_bar for lvl in levels]
        return np.stack(diffs, axis=1)

    per_path = np.concatenate(_map(run, _batches(samples, batch_size), threads), axis=0)
    rows = []
    for col, g in enumerate(grids):
        mean, se = _mean_stderr(per_path[:, col])
        rows.append(ErrorRow(g.dt, samples, float(mean), float(se)))
        if log:
            log(f"dt={g.dt:.6g} samples={samples} error={float(mean):.6g} stderr={float(se):.3g}")
    fit_pts = [(r.dt, r.error) for r in rows if r.dt > ref_dt * (1 + 1e-12)]
    if len(fit_pts) >= 3:
        slope, icpt, ci = rate_regress(fit_pts)
    else:
        slope = icpt = ci = math.nan
    return StrongErrorReport(p_bar, T, ref_dt, rows, slope, ci, icpt, seed, per_path)


# --------------------------------------------------------------------------
# whole-trajectory ensembles

@dataclass
class PathsResult:
    grid: SimulationGrid
    states: np.ndarray      # (P, steps + 1, d), step 0 = xi(0)
    pre_norms: np.ndarray   # (P, steps + 1)
    truncated: np.ndarray   # (P, steps + 1) bool
    nonfinite: np.ndarray   # (P, steps + 1) bool
    bound: float

    @property
    def times(self) -> np.ndarray:
        return self.grid.times()


def simulate_paths(model: SddeModel, profile: Optional[TruncationProfile],
                   grid: SimulationGrid, scheme_kind: SchemeKind, samples: int, seed: int,
                   batch_size: int = DEFAULT_BATCH, threads: int = 1,
                   first_path: int = 0) -> PathsResult:
    """Run ``samples`` independent paths at ``grid.dt`` and keep every state."""
    steps = grid.horizon_steps
    x0 = model.initial_value(0.0)

    def run(batch):
        first, count = batch
        first += first_path
        ens = PathEnsemble(model, grid, scheme_kind, profile, count, first)
        source = BrownianBatch(seed, first, count, model.noise_dim, grid.dt, grid.horizon)
        states = np.empty((count, steps + 1, model.state_dim))
        pre = np.empty((count, steps + 1))
        trunc = np.zeros((count, steps + 1), dtype=bool)
        nonfin = np.zeros((count, steps + 1), dtype=bool)
        states[:, 0] = x0
        pre[:, 0] = np.linalg.norm(x0)
        at = 1
        for dW in source.blocks(_BLOCK_STEPS):
            blk = ens.advance(dW, keep=True)
            k = dW.shape[0]
            states[:, at:at + k] = blk.post.transpose(1, 0, 2)
            pre[:, at:at + k] = blk.pre_norm.T
            trunc[:, at:at + k] = blk.truncated.T
            nonfin[:, at:at + k] = blk.nonfinite.T
            at += k
        return states, pre, trunc, nonfin, ens.bound

    parts = _map(run, _batches(samples, batch_size), threads)
    return PathsResult(
        grid=grid,
        states=np.concatenate([p[0] for p in parts]),
        pre_norms=np.concatenate([p[1] for p in parts]),
        truncated=np.concatenate([p[2] for p in parts]),
        nonfinite=np.concatenate([p[3] for p in parts]),
        bound=parts[0][4],
    )


@dataclass
class MomentProbe:
    times: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    sup: float
    sup_stderr: float
    truncation_fraction: float
    nonfinite_samples: int


def moment_probe(model, profile, scheme_kind, q, dt, T, samples, seed,
                 batch_size=DEFAULT_BATCH, threads=1) -> MomentProbe:
    """Monte Carlo E|z(t_i)|^q at every grid time, and its supremum."""
    if not q > 0:
        raise ParameterError("q must be positive")
    grid = grid_for_step(model, dt, T)
    res = simulate_paths(model, profile, grid, scheme_kind, samples, seed, batch_size, threads)
    with np.errstate(all="ignore"):
        powers = np.linalg.norm(res.states, axis=-1) ** q
    means, ses = _mean_stderr(powers)
    j = int(np.nanargmax(means)) if np.any(np.isfinite(means)) else 0
    steps = res.truncated[:, 1:]
    frac = float(steps.mean()) if steps.size else 0.0
    return MomentProbe(res.times, means, ses, float(means[j]), float(ses[j]), frac,
                       int((~np.isfinite(powers)).any(axis=1).sum()))


# --------------------------------------------------------------------------
# stability

def feasibility_checks(gamma: float, k6: float, k7: float, tau: float) -> Tuple[float, float]:
    """Left-hand sides K6 e^{gamma tau} + gamma and K7 e^{gamma tau}."""
    e = math.exp(gamma * tau)
    return k6 * e + gamma, k7 * e


def _bisect_increasing(fn, lo, hi, tol=1e-12):
    """Largest x in [lo, hi] with fn(x) <= 0 for increasing fn (fn(lo) <= 0)."""
    while fn(hi) <= 0:
        lo, hi = hi, 2 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fn(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def gamma_solve(k6_bar: float, k6: float, k7_bar: float, k7: float, tau: float) -> float:
    """Largest gamma > 0 with K6 e^{gamma tau} + gamma <= K6bar and K7 e^{gamma tau} <= K7bar."""
    if not k6_bar > k6 > 0:
        raise ParameterError("need K6bar > K6 > 0")
    if not (k7_bar > k7 >= 0):
        raise ParameterError("need K7bar > K7 >= 0")
    if not tau > 0:
        raise ParameterError("tau must be positive")
    g1 = _bisect_increasing(lambda g: k6 * math.exp(g * tau) + g - k6_bar, 0.0, 1.0)
    if k7 == 0:
        return g1
    g2 = _bisect_increasing(lambda g: k7 * math.exp(g * tau) - k7_bar, 0.0, 1.0)
    return min(g1, g2)


def so1_holds(dt, gamma, epsilon, k6, k_hat, mu, tau, rtol=1e-12) -> bool:
    """Check both step-size inequalities behind the decay guarantee."""
    trunc_term = 2.0 * k_hat * dt ** (2.0 * (1.0 - mu))
    first = trunc_term <= epsilon * dt * (1 + rtol)
    second = k6 * dt + trunc_term <= k6 * math.exp(gamma * tau) * dt * (1 + rtol)
    return first and second


def max_stable_stepsize(gamma: float, epsilon: float, k6: float, k_hat: float,
                        mu: float, tau: float) -> float:
    """Largest dt in (0, 1] with 2 K^ dt^{2(1-mu)} <= eps dt and
    K6 dt + 2 K^ dt^{2(1-mu)} <= K6 e^{gamma tau} dt."""
    if not 0 < epsilon < gamma:
        raise ParameterError(f"need 0 < epsilon < gamma, got epsilon={epsilon}, gamma={gamma}")
    if not 0 < mu < 0.5:
        raise ParameterError("need 0 < mu < 1/2")
    if not (k_hat > 0 and k6 > 0 and tau > 0):
        raise ParameterError("K^, K6 and tau must be positive")
    expo = 1.0 / (1.0 - 2.0 * mu)
    first = (epsilon / (2.0 * k_hat)) ** expo
    second = (k6 * (math.exp(gamma * tau) - 1.0) / (2.0 * k_hat)) ** expo
    return min(1.0, first, second)


@dataclass
class MeanSquareDecay:
    times: np.ndarray
    mean_square: np.ndarray
    stderr: np.ndarray
    slope: float
    intercept: float
    extinct: bool
    window: Tuple[float, float]
    samples: int


def ms_decay_study(model, profile, dt, T, samples, seed, fit_window=(1.0, None),
                   batch_size=DEFAULT_BATCH, threads=1) -> MeanSquareDecay:
    """Mean square E|y(t_i)|^2 of the stability scheme and its log-linear decay slope."""
    grid = grid_for_step(model, dt, T)
    lo, hi = fit_window
    hi = grid.horizon if hi is None else hi
    if lo < 0 or hi <= lo:
        raise ParameterError(f"bad fit window [{lo}, {hi}]")
    res = simulate_paths(model, profile, grid, SchemeKind.STABILITY_TEM, samples, seed,
                         batch_size, threads)
    sq = np.sum(res.states**2, axis=-1)
    ms, se = _mean_stderr(sq)
    slope, icpt, extinct = log_linear_slope(res.times, ms, (lo, hi))
    return MeanSquareDecay(res.times, ms, se, slope, icpt, extinct, (lo, hi), samples)


def as_exponent_study(model, profile, dt, T, samples, seed, batch_size=DEFAULT_BATCH,
                      threads=1) -> np.ndarray:
    """(1/T) ln|y(T)| per path; exact zeros map to -inf."""
    grid = grid_for_step(model, dt, T)
    res = simulate_paths(model, profile, grid, SchemeKind.STABILITY_TEM, samples, seed,
                         batch_size, threads)
    norms = np.linalg.norm(res.states[:, -1], axis=-1)
    with np.errstate(divide="ignore"):
        return np.log(norms) / grid.horizon


@dataclass
class StabilityReport:
    gamma_theoretical: float
    gamma_used: float
    epsilon: float
    dt_bar: float
    decay_bound: float          # -(gamma_used - epsilon)
    ms_slope: float
    as_exponents: np.ndarray
    sample_count: int
    ms: Optional[MeanSquareDecay] = None
    dt: float = math.nan

    @property
    def as_bound(self) -> float:
        return self.decay_bound / 2.0

    @property
    def as_max(self) -> float:
        return float(np.max(self.as_exponents))

    def as_pass_fraction(self, bound: Optional[float] = None) -> float:
        bound = self.as_bound if bound is None else bound
        return float(np.mean(self.as_exponents <= bound))


def stability_study(model, profile, dt, T, samples, as_samples, seed, k6_bar, k6, k7_bar, k7,
                    epsilon, gamma=None, fit_window=(1.0, None), batch_size=DEFAULT_BATCH,
                    threads=1) -> StabilityReport:
    """Mean-square and almost-sure decay of the stability scheme plus the theoretical rates.

    ``gamma`` defaults to the largest admissible rate from :func:`gamma_solve`.
    """
    gamma_star = gamma_solve(k6_bar, k6, k7_bar, k7, model.delay)
    g = gamma_star if gamma is None else float(gamma)
    if not 0 < epsilon < g:
        raise ParameterError(f"need 0 < epsilon < gamma = {g}")
    dt_bar = max_stable_stepsize(g, epsilon, k6, profile.k_const, profile.mu, model.delay)
    ms = ms_decay_study(model, profile, dt, T, samples, seed, fit_window, batch_size, threads)
    ex = as_exponent_study(model, profile, dt, T, as_samples, seed, batch_size, threads)
    return StabilityReport(gamma_star, g, epsilon, dt_bar, -(g - epsilon), ms.slope, ex,
                           samples, ms, dt)
