"""Two constructions on 2-dimensional models.

* Two ends glued together: only the hypotheses are checkable (infinite volume
  on one end, stochastic incompleteness of the other).
* One end with a conformal factor lambda >= 1 that equals 1 on the right half
  plane and is large on a left sector. The sector carries infinite Green
  mass, while the test function v_o(r) cos(theta) has a Laplacian bounded
  below near its supremum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import criteria
from .quad import (KRONROD_NODES, KRONROD_WEIGHTS, IntegralVerdict, QuadratureConfig, classify_improper, gauss_legendre,
                   integrate_finite)
from .warp import ModelManifold, WarpingFunction

LITERAL = "literal"
CONSISTENT = "consistent"
CERTIFICATE_BOUND = math.sqrt(2.0) / 4.0

# radial onset of the outer-sector bound: lambda = 1 for r <= RAMP_START and
# the full bound from RAMP_END on, so the bound holds for every r > 1
RAMP_START, RAMP_END = 0.9, 1.0


class ExampleError(ValueError):
    pass


def smoothstep5(x):
    """C^2 step 0 -> 1 on [0, 1] (6x^5 - 15x^4 + 10x^3), clamped outside."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def angular_weight(theta):
    """0 on |theta| <= pi/2, 1 on the sector [3pi/4, 5pi/4], 2pi-periodic."""
    th = np.mod(np.asarray(theta, dtype=float), 2.0 * math.pi)
    d = np.abs(th - math.pi)  # angular distance from the ray theta = pi
    return smoothstep5((math.pi / 2 - d) / (math.pi / 4))


def radial_weight(r):
    return smoothstep5((np.asarray(r, dtype=float) - RAMP_START) / (RAMP_END - RAMP_START))


@dataclass
class ConformalExample:
    base: ModelManifold
    convention: str = LITERAL
    cfg: QuadratureConfig = field(default_factory=QuadratureConfig)
    check_base: bool = True

    def __post_init__(self):
        if self.convention not in (LITERAL, CONSISTENT):
            raise ValueError(f"convention must be {LITERAL!r} or {CONSISTENT!r}")
        if self.base.m != 2:
            raise ExampleError("the conformal example lives on a 2-dimensional model")
        w = self.base.warp
        if not math.isinf(w.domain_end):
            raise ExampleError("base warp must be defined on [0, inf)")
        if self.check_base:
            t = np.geomspace(1e-3, 50.0, 400)
            if np.any(np.asarray(w.dlog(t)) <= 0):
                raise ExampleError("base warp must be increasing")
            si = criteria.classify_stochastic(self.base, self.cfg)
            if not si.convergent:
                raise ExampleError(f"base model must be stochastically incomplete (verdict {si.outcome})")

    @property
    def volume_power(self) -> int:
        """Exponent k in dv~ = lambda^k dv."""
        return 1 if self.convention == LITERAL else 2

    def log_green(self, r) -> np.ndarray:
        """log G(o, r) for r > 0 through the tail integral of 1/sigma."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        K = criteria.tail_ratio(self.base.warp, 2, r)
        if not np.all(np.isfinite(K)):
            bad = r[~np.isfinite(K)][0]
            raise ExampleError(f"Green kernel not finite at r={bad!r}; cannot build the example")
        return np.log(K) - np.asarray(self.base.warp.log_sigma(r)) - math.log(2 * math.pi)

    def log_lambda(self, r, theta) -> np.ndarray:
        r, theta = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(theta, dtype=float))
        if np.any(r < 0):
            raise ValueError("r must be >= 0")
        out = np.zeros(r.shape)
        wt = angular_weight(theta) * radial_weight(r)
        act = wt > 0
        if act.any():
            ur, inv = np.unique(r[act], return_inverse=True)
            bound = np.maximum(0.0, -0.5 * self.log_green(ur))
            out[act] = wt[act] * bound[inv.ravel()]
        return out


def lambda_eval(ex: ConformalExample, r, theta):
    """Conformal factor lambda(r, theta) >= 1."""
    val = np.exp(ex.log_lambda(r, theta))
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class SectorMass:
    R_cut: float
    mass: float
    lower_bound: float
    error: float
    convention: str

    @property
    def holds(self) -> bool:
        return self.mass >= self.lower_bound * (1 - 1e-8) - self.error


def _sector_integrand(ex: ConformalExample, n_theta: int = 16):
    x, wts = gauss_legendre(n_theta)
    lo, hi = 3 * math.pi / 4, 5 * math.pi / 4
    th = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
    wth = 0.5 * (hi - lo) * wts
    k = ex.volume_power
    w = ex.base.warp

    def f(r):
        r = np.asarray(r, dtype=float)
        base = ex.log_green(r) + np.asarray(w.log_sigma(r))
        ll = ex.log_lambda(r[:, None], th[None, :])
        with np.errstate(over="ignore"):
            return np.exp(base[:, None] + k * ll) @ wth

    return f


def sector_green_mass(ex: ConformalExample, R_cut: float, n_theta: int = 16) -> SectorMass:
    """Green mass of the left sector over 1 <= r <= R_cut, against (pi/2) int_1^R_cut sigma."""
    if R_cut < 1:
        raise ValueError("R_cut must be >= 1")
    if R_cut == 1:
        return SectorMass(1.0, 0.0, 0.0, 0.0, ex.convention)
    w = ex.base.warp
    mass, err = integrate_finite(_sector_integrand(ex, n_theta), 1.0, float(R_cut),
                                 abs_tol=1e-300, rel_tol=1e-11)
    with np.errstate(over="ignore"):
        vol, _ = integrate_finite(lambda r: np.exp(np.asarray(w.log_sigma(r))), 1.0, float(R_cut),
                                  abs_tol=1e-300, rel_tol=1e-11)
    return SectorMass(float(R_cut), mass, 0.5 * math.pi * vol, err, ex.convention)


def sector_mass_verdict(ex: ConformalExample, cfg: QuadratureConfig | None = None,
                        n_theta: int = 16) -> IntegralVerdict:
    """Classifier over R_cut = 2, 4, 8, ... applied to the radial sector integrand."""
    cfg = cfg or QuadratureConfig(R0=2.0)
    return classify_improper(_sector_integrand(ex, n_theta), 1.0, cfg)


def sector_mass_table(ex: ConformalExample, cuts=(2.0, 4.0, 8.0)) -> list[SectorMass]:
    return [sector_green_mass(ex, R) for R in cuts]


def v_o_eval(ex: ConformalExample, r: float) -> float:
    """v_o(r) = int_0^r sigma^{-1} int_0^t sigma: radial solution of Delta v_o = 1, v_o(0) = 0."""
    if r < 0:
        raise ValueError("r must be >= 0")
    return criteria.exit_time_ball(ex.base, 0.0, float(r))


def v_o_identity_residual(ex: ConformalExample, r: float) -> float:
    """|v_o(r) + F(r) - F(0)|, with F from the improper-integral classifier."""
    cfg = ex.cfg.tightened(100.0)
    F0 = criteria.global_exit_time(ex.base, 0.0, cfg)
    Fr = criteria.global_exit_time(ex.base, float(r), cfg)
    if not (F0.convergent and Fr.convergent):
        raise ExampleError("F not certified finite")
    return abs(v_o_eval(ex, r) + Fr.value - F0.value)


def laplacian_residual(ex: ConformalExample, r, rel_step: float = 1e-4) -> np.ndarray:
    """|v_o'' + (sigma'/sigma) v_o' - 1| with v_o'' by central differences of v_o'."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    w = ex.base.warp
    h = rel_step * np.maximum(r, 1e-2)
    d1 = criteria.mass_ratio(w, 2, r)
    d2 = (criteria.mass_ratio(w, 2, r + h) - criteria.mass_ratio(w, 2, r - h)) / (2 * h)
    return np.abs(d2 + np.asarray(w.dlog(r)) * d1 - 1.0)


@dataclass
class MaxPrincipleCertificate:
    grid: dict
    n_gated: int
    n_skipped: int
    min_value: float
    sup_v_o: float
    r_gate: float
    argmin: tuple
    laplacian_residual: float
    convention: str
    bound: float = CERTIFICATE_BOUND

    @property
    def passed(self) -> bool:
        return self.n_gated > 0 and self.min_value >= self.bound - 1e-9

    def to_dict(self) -> dict:
        return {"grid": self.grid, "n_gated": self.n_gated, "n_skipped": self.n_skipped,
                "min_value": self.min_value, "bound": self.bound, "convention": self.convention,
                "sup_v_o": self.sup_v_o, "r_gate": self.r_gate,
                "argmin": list(self.argmin), "laplacian_residual": self.laplacian_residual}


def gate_radius(ex: ConformalExample, sup_v: float) -> float:
    """Radius where sigma(r)^2 = 2 sup v_o (sigma is increasing)."""
    w = ex.base.warp
    target = 0.5 * math.log(2.0 * sup_v)
    hi = 1.0
    while float(w.log_sigma(hi)) <= target:
        hi *= 2.0
    return brentq(lambda r: float(w.log_sigma(r)) - target, 1e-12, hi, xtol=1e-14, rtol=1e-15)


def _v_o_on_grid(ex: ConformalExample, rs: np.ndarray) -> np.ndarray:
    """v_o at increasing radii: adaptive up to rs[0], then one Kronrod rule per gap."""
    v0 = v_o_eval(ex, float(rs[0]))
    a, b = rs[:-1], rs[1:]
    half = 0.5 * (b - a)
    pts = (0.5 * (a + b))[:, None] + half[:, None] * KRONROD_NODES[None, :]
    W = criteria.mass_ratio(ex.base.warp, 2, pts.ravel()).reshape(pts.shape)
    gaps = half * (W @ KRONROD_WEIGHTS)
    return v0 + np.concatenate([[0.0], np.cumsum(gaps)])


def max_principle_check(ex: ConformalExample, n_r: int = 200, n_theta: int = 200,
                        r_range: tuple | None = None,
                        theta_range: tuple = (-math.pi / 4, math.pi / 4)) -> MaxPrincipleCertificate:
    """Minimum of Lap~(v_o cos theta) over the gated grid.

    Grid points outside {sigma(r)^2 > 2 sup v_o, |theta| <= pi/4} are skipped and
    counted. Delta v_o = 1 is used in the formula and checked separately by
    finite differences at the gated radii.
    """
    F0 = criteria.global_exit_time(ex.base, 0.0, ex.cfg)
    if not F0.convergent:
        raise ExampleError("sup v_o is not certified finite")
    sup_v = F0.value
    r_gate = gate_radius(ex, sup_v)
    if r_range is None:
        r_range = (r_gate + 1e-6, r_gate + 3.0)
    rs = np.linspace(r_range[0], r_range[1], n_r)
    ths = np.linspace(theta_range[0], theta_range[1], n_theta)
    w = ex.base.warp
    v = _v_o_on_grid(ex, rs)
    log_s = np.asarray(w.log_sigma(np.maximum(rs, 1e-300)))
    r_ok = 2.0 * log_s > math.log(2.0 * sup_v)
    th_ok = np.abs(ths) <= math.pi / 4 * (1 + 1e-15)
    gated = r_ok[:, None] & th_ok[None, :]
    n_gated = int(gated.sum())
    lap_res = float(laplacian_residual(ex, rs[r_ok]).max()) if r_ok.any() else math.nan
    if n_gated:
        RR, TT = np.meshgrid(rs, ths, indexing="ij")
        lam2 = np.exp(2.0 * ex.log_lambda(RR, TT))
        vals = np.cos(TT) * (1.0 - v[:, None] * np.exp(-2.0 * log_s)[:, None]) / lam2
        vals = np.where(gated, vals, np.inf)
        idx = np.unravel_index(np.argmin(vals), vals.shape)
        min_value = float(vals[idx])
        argmin = (float(rs[idx[0]]), float(ths[idx[1]]))
    else:
        min_value, argmin = math.nan, (math.nan, math.nan)
    grid = {"r_min": float(rs[0]), "r_max": float(rs[-1]), "n_r": n_r,
            "theta_min": float(ths[0]), "theta_max": float(ths[-1]), "n_theta": n_theta}
    return MaxPrincipleCertificate(grid, n_gated, n_r * n_theta - n_gated, min_value, sup_v,
                                   r_gate, argmin, lap_res, ex.convention)


@dataclass
class TwoEndReport:
    volume_integral: IntegralVerdict
    si_integral: IntegralVerdict

    @property
    def holds(self) -> bool | None:
        """True / False, or None when a verdict is Inconclusive."""
        if self.volume_integral.divergent and self.si_integral.convergent:
            return True
        if self.volume_integral.convergent or self.si_integral.divergent:
            return False
        return None

    @property
    def conclusion(self) -> str:
        h = self.holds
        if h is None:
            return "cannot certify: inconclusive numerics"
        return "hypotheses of the two-end example hold" if h else "hypotheses of the two-end example fail"

    def to_dict(self) -> dict:
        return {"volume_integral": self.volume_integral.to_dict(),
                "si_integral": self.si_integral.to_dict(), "conclusion": self.conclusion}


def verify_two_end_hypotheses(w1: WarpingFunction, w2: WarpingFunction,
                              cfg: QuadratureConfig | None = None) -> TwoEndReport:
    """End 1 needs infinite area (int^inf sigma_1 = inf); end 2 needs stochastic incompleteness."""
    cfg = cfg or QuadratureConfig()
    ModelManifold(2, w1)
    ModelManifold(2, w2)

    def area(t):
        with np.errstate(over="ignore"):
            return np.exp(np.asarray(w1.log_sigma(t), dtype=float))

    upper = w1.domain_end
    vol = classify_improper(area, 0.0, cfg, upper_limit=upper)
    si = criteria.classify_stochastic(ModelManifold(2, w2), cfg)
    return TwoEndReport(vol, si)
