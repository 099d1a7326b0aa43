"""Monte Carlo for the radial part of Brownian motion (generator Delta) on a model.

The radial process solves dr = (m-1) (sigma'/sigma)(r) dt + sqrt(2) dW. Each path
draws its randomness from a counter-based generator keyed by a per-path seed,
so results do not depend on scheduling or thread count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from numba import njit, prange
from scipy.stats import beta

from .warp import (Euclidean, Hyperbolic, ModelManifold, Spherical, SplicedExpPower, Tabulated,
                   WarpingFunction)

GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1
_U_GOLDEN = np.uint64(GOLDEN)
_U_STREAM = np.uint64(0xD1B54A32D192ED03)


class SimulationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# counter-based random numbers
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def mix64(z: int) -> int:
    """splitmix64 finalizer (a bijection on 64-bit words)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_path_seed(master_seed: int, path_index: int) -> int:
    """Seed of path ``path_index``; injective in the index for a fixed master seed."""
    if path_index < 0:
        raise ValueError("path_index must be >= 0")
    return mix64((master_seed & _MASK) ^ mix64(((path_index + 1) * GOLDEN) & _MASK))


@njit(cache=True, inline="always")
def _path_seed(master, i):
    return _mix64(master ^ _mix64(np.uint64(i + 1) * _U_GOLDEN))


@njit(cache=True, inline="always")
def _uniform(seed, counter):
    """Uniform on (0, 1] from draw number ``counter`` of stream ``seed`` (splitmix64 indexing)."""
    x = _mix64(seed + (np.uint64(counter) + np.uint64(1)) * _U_GOLDEN)
    return (float(x >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------------------
# drift (m - 1) sigma'/sigma
# ---------------------------------------------------------------------------

EUCLIDEAN, HYPERBOLIC, SPHERICAL, SPLICED, TABULATED = 0, 1, 2, 3, 4


@njit(cache=True)
def _dlog(code, par, xs, cs, r):
    if code == EUCLIDEAN:
        return 1.0 / r
    if code == HYPERBOLIC:
        k = par[0]
        return k / math.tanh(k * r)
    if code == SPHERICAL:
        k = par[0]
        return k / math.tan(k * r)
    if code == SPLICED:
        a, p, t0 = par[0], par[1], par[2]
        t1 = 0.5 * t0
        if r <= t1:
            return 1.0 / r
        if r >= t0:
            return a * p * r ** (p - 1.0)
        d = t0 - t1
        x = (r - t1) / d
        # derivative of the quintic in par[3:9]
        acc = 5.0 * par[8]
        for j in range(4, 0, -1):
            acc = acc * x + j * par[3 + j]
        return acc / d
    # tabulated: 1/r + piecewise polynomial (scipy PPoly layout) for d/dt log(sigma/t)
    n = xs.size - 1
    i = np.searchsorted(xs, r, side="right") - 1
    if i < 0:
        i = 0
    if i > n - 1:
        i = n - 1
    dx = r - xs[i]
    acc = 0.0
    for j in range(cs.shape[0]):
        acc = acc * dx + cs[j, i]
    return 1.0 / r + acc


def drift_spec(w: WarpingFunction):
    """(code, params, breakpoints, coefficients) describing sigma'/sigma to the kernel."""
    empty_x = np.zeros(2)
    empty_c = np.zeros((1, 1))
    if isinstance(w, Euclidean):
        return EUCLIDEAN, np.zeros(1), empty_x, empty_c
    if isinstance(w, Hyperbolic):
        return HYPERBOLIC, np.array([w.k]), empty_x, empty_c
    if isinstance(w, Spherical):
        return SPHERICAL, np.array([w.k]), empty_x, empty_c
    if isinstance(w, SplicedExpPower):
        return SPLICED, np.concatenate([[w.a, w.p, w.t0], w._coef]), empty_x, empty_c
    if isinstance(w, Tabulated):
        pp = w._dell
        return TABULATED, np.zeros(1), np.ascontiguousarray(pp.x), np.ascontiguousarray(pp.c)
    raise SimulationError(f"no simulation drift for family {w.family!r}")


# ---------------------------------------------------------------------------
# path kernel
# ---------------------------------------------------------------------------

@njit(cache=True)
def _run_path(seed, r0, level, h, horizon, eps, max_halvings, m1, code, par, xs, cs,
              rec_t, rec_r):
    """First time the path started at r0 reaches ``level`` (nan if not before ``horizon``).

    Euler-Maruyama with: drift frozen at eps and reflection inside [0, eps];
    local step halving while drift * step > 0.1 r; a Brownian-bridge test for
    crossings between grid times.
    """
    t = 0.0
    r = r0
    bridge_seed = _mix64(seed ^ _U_STREAM)
    pair = 0
    step = 0
    z_spare = 0.0
    have_spare = False
    n_rec = rec_t.size
    k = 0
    if n_rec > 0:
        rec_t[0] = 0.0
        rec_r[0] = r
        k = 1
    h_min = h / 2.0 ** max_halvings
    while t < horizon:
        rr = r if r > eps else eps
        b = m1 * _dlog(code, par, xs, cs, rr)
        hh = h
        while b * hh > 0.1 * rr and hh > h_min:
            hh *= 0.5
        if have_spare:
            z = z_spare
            have_spare = False
        else:
            # Box-Muller pair from draws 2*pair and 2*pair + 1
            rad = math.sqrt(-2.0 * math.log(_uniform(seed, 2 * pair)))
            ang = 2.0 * math.pi * _uniform(seed, 2 * pair + 1)
            pair += 1
            z = rad * math.cos(ang)
            z_spare = rad * math.sin(ang)
            have_spare = True
        rn = r + b * hh + math.sqrt(2.0 * hh) * z
        if rn < 0.0 or r <= eps:
            rn = abs(rn)
        t += hh
        if n_rec > 0 and k < n_rec:
            rec_t[k] = t
            rec_r[k] = rn
            k += 1
        if rn >= level:
            return t - 0.5 * hh, k
        # bridge crossing probability for a diffusion coefficient sqrt(2);
        # below exp(-40) it cannot beat the smallest uniform, so no draw is needed
        expo = (level - r) * (level - rn) / hh
        if expo < 40.0 and _uniform(bridge_seed, step) < math.exp(-expo):
            return t - 0.5 * hh, k
        step += 1
        r = rn
    return np.nan, k


@njit(cache=True, parallel=True)
def _run_paths(master, n_paths, r0, level, h, horizon, eps, max_halvings, m1, code, par, xs, cs):
    out = np.empty(n_paths)
    no_t = np.empty(0)
    no_r = np.empty(0)
    for i in prange(n_paths):
        seed = _path_seed(master, i)
        out[i] = _run_path(seed, r0, level, h, horizon, eps, max_halvings, m1, code, par, xs, cs,
                           no_t, no_r)[0]
    return out


# ---------------------------------------------------------------------------
# configuration and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimulationConfig:
    h: float = 1e-4
    n_paths: int = 100_000
    master_seed: int = 0
    cap_radius: float = 50.0
    horizon: float = 10.0
    pole_guard: float = 1e-3
    max_halvings: int = 10

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size h must be positive")
        if not self.pole_guard > 0:
            raise ValueError("pole guard must be positive")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError("n_paths must be a positive integer")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not (0 <= int(self.master_seed) <= _MASK):
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if not (0 <= self.max_halvings <= 60):
            raise ValueError("max_halvings out of range")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ExitTimeStats:
    n_paths: int
    n_exited: int
    n_censored: int
    mean: float
    variance: float
    se: float
    min: float
    max: float
    config_echo: dict = field(default_factory=dict)

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.n_paths

    def to_dict(self) -> dict:
        return {"n_paths": self.n_paths, "n_exited": self.n_exited, "n_censored": self.n_censored,
                "mean": self.mean, "se": self.se, "min": self.min, "max": self.max,
                "variance": self.variance, "config_echo": self.config_echo}


def _stats(times: np.ndarray, echo: dict) -> ExitTimeStats:
    done = times[~np.isnan(times)]
    n, k = times.size, done.size
    if k == 0:
        nan = math.nan
        return ExitTimeStats(n, 0, n, nan, nan, nan, nan, nan, echo)
    mean = math.fsum(done) / k
    var = math.fsum((done - mean) ** 2) / (k - 1) if k > 1 else 0.0
    return ExitTimeStats(n, k, n - k, mean, var, math.sqrt(var / k), float(done.min()),
                         float(done.max()), echo)


def _level_ok(mm: ModelManifold, level: float):
    end = mm.warp.domain_end
    if not level < end:
        raise SimulationError(f"radius {level!r} outside the warp domain (ends at {end!r})")


def hitting_times(mm: ModelManifold, r0: float, level: float, cfg: SimulationConfig,
                  horizon: float | None = None) -> np.ndarray:
    """Per-path first hitting times of ``level`` (nan for paths censored at the horizon)."""
    if r0 < 0:
        raise SimulationError("r0 must be >= 0")
    _level_ok(mm, level)
    code, par, xs, cs = drift_spec(mm.warp)
    T = cfg.horizon if horizon is None else horizon
    return _run_paths(np.uint64(cfg.master_seed), int(cfg.n_paths), float(r0), float(level),
                      float(cfg.h), float(T), float(cfg.pole_guard), int(cfg.max_halvings),
                      float(mm.m - 1), code, par, xs, cs)


def _echo(mm: ModelManifold, cfg: SimulationConfig, **extra) -> dict:
    return {"model": mm.spec(), **cfg.to_dict(), **extra}


def simulate_exit(mm: ModelManifold, r0: float, R: float,
                  cfg: SimulationConfig | None = None) -> ExitTimeStats:
    """Mean first exit time from B_R(o) starting at distance r0."""
    cfg = cfg or SimulationConfig()
    if not (0 <= r0 < R):
        raise SimulationError(f"need 0 <= r0 < R, got r0={r0!r}, R={R!r}")
    times = hitting_times(mm, r0, R, cfg)
    return _stats(times, _echo(mm, cfg, r0=r0, R=R))


@dataclass(frozen=True)
class ExplosionResult:
    n_paths: int
    n_reached: int
    fraction: float
    ci_low: float
    ci_high: float
    mean_hit_time: float | None
    cap_radius: float
    horizon: float
    config_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"n_paths": self.n_paths, "n_reached": self.n_reached, "fraction": self.fraction,
                "ci95": [self.ci_low, self.ci_high], "mean_hit_time": self.mean_hit_time,
                "cap_radius": self.cap_radius, "horizon": self.horizon,
                "config_echo": self.config_echo}


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def explosion_probe(mm: ModelManifold, r0: float, cfg: SimulationConfig | None = None) -> ExplosionResult:
    """Fraction of paths reaching cap_radius before the horizon, with a 95% Clopper-Pearson interval."""
    cfg = cfg or SimulationConfig()
    if not (0 <= r0 < cfg.cap_radius):
        raise SimulationError("need 0 <= r0 < cap_radius")
    times = hitting_times(mm, r0, cfg.cap_radius, cfg)
    hit = times[~np.isnan(times)]
    n, k = times.size, hit.size
    lo, hi = clopper_pearson(k, n)
    mean_hit = math.fsum(hit) / k if k else None
    return ExplosionResult(n, k, k / n, lo, hi, mean_hit, cfg.cap_radius, cfg.horizon,
                           _echo(mm, cfg, r0=r0))


def stabilization_scan(mm: ModelManifold, r0: float, R_list,
                       cfg: SimulationConfig | None = None) -> list[tuple[float, ExitTimeStats]]:
    """Exit-time statistics for each ball radius in an increasing list."""
    R_list = [float(R) for R in R_list]
    if not R_list or any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise SimulationError("R_list must be nonempty and strictly increasing")
    if not r0 < R_list[0]:
        raise SimulationError("r0 must be below every R")
    return [(R, simulate_exit(mm, r0, R, cfg)) for R in R_list]


def trace_paths(mm: ModelManifold, r0: float, level: float, cfg: SimulationConfig,
                n_trace: int = 1, max_steps: int = 100_000) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """Recorded (t, r) steps of the first ``n_trace`` paths (same streams as the full run)."""
    _level_ok(mm, level)
    code, par, xs, cs = drift_spec(mm.warp)
    out = []
    for i in range(min(n_trace, cfg.n_paths)):
        seed = np.uint64(derive_path_seed(cfg.master_seed, i))
        rt = np.empty(max_steps + 1)
        rr = np.empty(max_steps + 1)
        _, k = _run_path(seed, float(r0), float(level), float(cfg.h), float(cfg.horizon),
                         float(cfg.pole_guard), int(cfg.max_halvings), float(mm.m - 1),
                         code, par, xs, cs, rt, rr)
        out.append((i, rt[:k], rr[:k]))
    return out


def write_trace_csv(traces, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["path_index", "step", "t", "r"])
        for i, ts, rs in traces:
            for step, (t, r) in enumerate(zip(ts, rs)):
                wr.writerow([i, step, repr(float(t)), repr(float(r))])


def thread_count() -> int:
    return numba.get_num_threads()
