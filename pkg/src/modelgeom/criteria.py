"""Classification integrals and exit-time formulas on model manifolds.

Two kernels carry everything:

* ``mass_ratio(w, m, t)``   = (int_0^t sigma^{m-1}) / sigma^{m-1}(t)
* ``tail_ratio(w, m, r)``   = sigma^{m-1}(r) int_r^inf sigma^{1-m}

Both are computed as integrals of ``exp(+-(m-1) (L(t+u) - L(t)))`` with
``L = log sigma`` so the enormous sigma values of super-exponential warps
cancel analytically instead of overflowing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .quad import (CONVERGENT, DIVERGENT, INCONCLUSIVE, KRONROD_NODES, KRONROD_WEIGHTS,
                   GAUSS_WEIGHTS, IntegralVerdict, QuadratureConfig, classify_improper,
                   integrate_finite)
from .warp import ModelManifold, Tabulated, WarpingFunction

EXIT_TIME_CFG = QuadratureConfig(abs_tol=1e-13, rel_tol=1e-12)


class PreconditionError(ValueError):
    pass


class ConsistencyError(AssertionError):
    """A ClassificationReport violates one of the model-manifold identities."""


# ---------------------------------------------------------------------------
# panel integration in the scaled variable v
# ---------------------------------------------------------------------------

def _split_gk(g: Callable, rows: np.ndarray, lo: np.ndarray, hi: np.ndarray, d: int) -> np.ndarray:
    n = 2 ** d
    width = (hi - lo) / n
    half = 0.5 * width
    mids = lo[:, None] + width[:, None] * (np.arange(n) + 0.5)
    v = (mids[:, :, None] + half[:, None, None] * KRONROD_NODES).reshape(rows.size, -1)
    y = np.asarray(g(rows, v), dtype=float).reshape(rows.size, n, 15)
    return half * (y @ KRONROD_WEIGHTS).sum(axis=1)


def _refine(g: Callable, rows: np.ndarray, lo: np.ndarray, hi: np.ndarray, atol: np.ndarray,
            max_depth: int = 8) -> np.ndarray:
    """Equal-width bisection of whole panels for many rows at once; rows whose
    successive levels disagree by more than atol fall back to adaptive quadrature."""
    prev = _split_gk(g, rows, lo, hi, 1)
    out = np.full(rows.size, np.nan)
    todo = np.arange(rows.size)
    for d in range(2, max_depth + 1):
        cur = _split_gk(g, rows[todo], lo[todo], hi[todo], d)
        ok = np.isfinite(cur) & (np.abs(cur - prev) <= atol[todo])
        out[todo[ok]] = cur[ok]
        todo, prev = todo[~ok], cur[~ok]
        if todo.size == 0:
            return out
    for i in todo:
        row = rows[i]
        out[i], _ = integrate_finite(lambda vv: g(np.full(vv.size, row), vv[:, None])[:, 0],
                                     float(lo[i]), float(hi[i]), abs_tol=float(atol[i]), rel_tol=1e-13)
    return out


def _panels(g: Callable, vmax: np.ndarray, *, infinite: bool = False,
            max_panels: int = 400, tol: float = 1e-13) -> np.ndarray:
    """Row-wise ``int_0^{vmax} g(rows, v) dv`` for g decreasing in v on the tail.

    Panels ``[0, .5], [.5, 1], [1, 1.5], [1.5, 2.25], ...`` (clipped at vmax) with a
    15-point Kronrod rule each; a panel whose Gauss/Kronrod discrepancy is too
    large is redone adaptively. Integration of a row stops at vmax or once
    ``g(v) * (remaining length)`` is negligible. Rows that never settle in
    ``infinite`` mode get +inf.
    """
    n = vmax.size
    total = np.zeros(n)
    done = np.zeros(n, dtype=bool)
    x = np.concatenate([KRONROD_NODES, [1.0]])
    lo_edge = 0.0
    for j in range(max_panels):
        hi_edge = 0.5 if j == 0 else 1.5 ** (j - 1)
        rows = np.nonzero(~done)[0]
        if rows.size == 0:
            break
        lo = np.minimum(lo_edge, vmax[rows])
        hi = np.minimum(hi_edge, vmax[rows])
        half = 0.5 * (hi - lo)
        v = (0.5 * (lo + hi))[:, None] + half[:, None] * x[None, :]
        y = np.asarray(g(rows, v), dtype=float)
        y = np.where(np.isfinite(y), y, np.nan)
        body = y[:, :15]
        kr = half * (body @ KRONROD_WEIGHTS)
        ga = half * (body @ GAUSS_WEIGHTS)
        scale = np.abs(kr) + 1e-300
        est = scale * np.minimum(1.0, (200.0 * np.abs(kr - ga) / scale) ** 1.5)
        bad = ~np.isfinite(kr) | (est > tol * np.maximum(np.abs(total[rows] + kr), 1e-300))
        bad &= half > 0
        if bad.any():
            bi = np.nonzero(bad)[0]
            # accuracy is needed relative to the row total, not to this panel
            atol = 0.5 * tol * np.maximum(np.abs(total[rows[bi]] + np.nan_to_num(kr[bi])), 1e-300)
            kr[bi] = _refine(g, rows[bi], lo[bi], hi[bi], atol)
        total[rows] += kr
        reached = hi >= vmax[rows]
        g_end = np.nan_to_num(y[:, 15], nan=0.0)
        remaining = hi if infinite else (vmax[rows] - hi)
        negligible = g_end * remaining <= 1e-17 * total[rows]
        finished = reached | (negligible & (j >= 2))
        done[rows[finished]] = True
        lo_edge = hi_edge
    if infinite:
        total[~done] = np.inf
    return total


def mass_ratio(w: WarpingFunction, m: int, t) -> np.ndarray:
    """(int_0^t sigma^{m-1}) / sigma^{m-1}(t) for t > 0 (vectorized)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    pos = t > 0
    if not pos.any():
        return out
    tp = t[pos]
    k = m - 1
    lam = k * np.asarray(w.dlog(tp), dtype=float)
    s = np.maximum(np.nan_to_num(lam, nan=0.0), 1.0 / tp)
    vmax = s * tp

    def g(rows, v):
        u = np.minimum(v / s[rows, None], tp[rows, None])
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(k * w.log_increment(tp[rows, None], -u)) / s[rows, None]

    out[pos] = _panels(g, vmax)
    return out


def _log_gk_pieces(w: WarpingFunction, k: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log int_a^b exp(k (L(s) - L(b))) ds, one 15-point Kronrod rule per row."""
    half = 0.5 * (b - a)
    s = (0.5 * (a + b))[:, None] + half[:, None] * KRONROD_NODES[None, :]
    with np.errstate(over="ignore", under="ignore", divide="ignore"):
        vals = np.exp(k * w.log_increment(b[:, None], s - b[:, None]))
        return np.log(half * (vals @ KRONROD_WEIGHTS))


def mass_ratio_tabulated(w, m: int, t) -> np.ndarray:
    """mass_ratio for a tabulated warp inside its table, by cumulative
    integration node to node (each node interval holds one spline piece).

    Much cheaper than mass_ratio when many sample points are needed.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0) or np.any(t > w.domain_end):
        raise ValueError("t outside the tabulated domain")
    k = m - 1
    nodes = w.nodes
    Ln = np.asarray(w.log_sigma(nodes[1:]), dtype=float)
    # log int_{t_i}^{t_{i+1}} sigma^k, then running log-sum
    pieces = k * Ln + _log_gk_pieces(w, k, nodes[:-1], nodes[1:])
    logA = np.concatenate([[-np.inf], np.logaddexp.accumulate(pieces)])
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    i = np.clip(np.searchsorted(nodes, tp, side="right") - 1, 0, nodes.size - 2)
    Lt = np.asarray(w.log_sigma(tp), dtype=float)
    lo = nodes[i]
    partial = np.where(tp > lo, k * Lt + _log_gk_pieces(w, k, lo, tp), -np.inf)
    out[pos] = np.exp(np.logaddexp(logA[i], partial) - k * Lt)
    return out


def tail_ratio(w: WarpingFunction, m: int, r) -> np.ndarray:
    """sigma^{m-1}(r) int_r^inf sigma^{1-m} (vectorized, +inf when divergent)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r <= 0):
        raise ValueError("tail_ratio needs r > 0")
    k = m - 1
    lam = k * np.asarray(w.dlog(r), dtype=float)
    s = np.maximum(np.nan_to_num(lam, nan=0.0), 1.0 / r)

    def g(rows, v):
        u = v / s[rows, None]
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(-k * w.log_increment(r[rows, None], u)) / s[rows, None]

    return _panels(g, np.full(r.size, np.inf), infinite=True)


# ---------------------------------------------------------------------------
# continuation of the stochastic-completeness integrand past a tabulated range
# ---------------------------------------------------------------------------

def _riccati_tail(w: Tabulated, m: int, t_far: float):
    """Continue W = mass_ratio beyond the tabulated range using the curvature
    profile: with y = sigma'/sigma, y' = G - y^2 and W' = 1 - (m-1) y W,
    integrated in log-variables against tau = log t (stiff, Radau)."""
    T = w.domain_end
    y0 = float(w.dlog(T))
    W0 = float(mass_ratio(w, m, T)[0])
    if not (y0 > 0 and W0 > 0):
        return None
    k = m - 1
    G = w.profile

    def rhs(tau, z):
        t = math.exp(tau)
        eta, zeta = z
        return [t * (float(G(t)) * math.exp(-eta) - math.exp(eta)),
                t * (math.exp(-zeta) - k * math.exp(eta))]

    def jac(tau, z):
        t = math.exp(tau)
        eta, zeta = z
        return [[t * (-float(G(t)) * math.exp(-eta) - math.exp(eta)), 0.0],
                [-t * k * math.exp(eta), -t * math.exp(-zeta)]]

    sol = solve_ivp(rhs, (math.log(T), math.log(t_far)), [math.log(y0), math.log(W0)],
                    method="Radau", jac=jac, rtol=1e-11, atol=1e-12, dense_output=True)
    if not sol.success:
        return None
    dense = sol.sol

    def tail(t):
        t = np.asarray(t, dtype=float)
        return np.exp(dense(np.log(t))[1])

    return tail


def ratio_integrand(mm: ModelManifold, cfg: QuadratureConfig | None = None):
    """(integrand, upper_limit, breakpoints) for int^inf mass_ratio."""
    cfg = cfg or QuadratureConfig()
    w, m = mm.warp, mm.m

    def base(t):
        return mass_ratio(w, m, t)

    T = w.domain_end
    if math.isinf(T):
        return base, math.inf, ()
    if isinstance(w, Tabulated) and w.profile is not None and w.truncated_at is None:
        tail = _riccati_tail(w, m, cfg.R0 * 2.0 ** (cfg.j_max + 2))
        if tail is not None:
            def f(t):
                t = np.asarray(t, dtype=float)
                out = np.empty_like(t)
                inside = t <= T
                if inside.any():
                    out[inside] = base(t[inside])
                if (~inside).any():
                    out[~inside] = tail(t[~inside])
                return out
            return f, math.inf, (T,)
    return base, T, ()


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def _kernel_integral(mm: ModelManifold, r: float, cfg: QuadratureConfig) -> IntegralVerdict:
    """Verdict on int_r^inf (sigma(t)/sigma(r))^{1-m} dt."""
    w, k = mm.warp, mm.m - 1

    def f(t):
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(-k * w.log_increment(r, np.asarray(t, dtype=float) - r))

    return classify_improper(f, r, cfg, upper_limit=w.domain_end)


def log_green_kernel(mm: ModelManifold, r: float, cfg: QuadratureConfig | None = None) -> float:
    """log G(o, r); +inf on parabolic models. Raises on Inconclusive."""
    v = _kernel_integral(mm, r, cfg or QuadratureConfig())
    if v.divergent:
        return math.inf
    if v.inconclusive:
        raise PreconditionError(f"Green kernel at r={r!r} is inconclusive: {v.reason}")
    return math.log(v.value) - (mm.m - 1) * float(mm.warp.log_sigma(r)) - math.log(mm.omega)


def green_kernel(mm: ModelManifold, r: float, cfg: QuadratureConfig | None = None) -> IntegralVerdict:
    """G(x, o) at distance r, normalized by c_m = 1/omega_{m-1}."""
    if not r > 0:
        raise ValueError("green_kernel needs r > 0")
    v = _kernel_integral(mm, r, cfg or QuadratureConfig())
    with np.errstate(under="ignore"):
        factor = math.exp(-(mm.m - 1) * float(mm.warp.log_sigma(r))) / mm.omega
    return v.scaled(factor)


def classify_parabolic(mm: ModelManifold, cfg: QuadratureConfig | None = None) -> IntegralVerdict:
    """Verdict on int_1^inf sigma^{1-m}; Divergent means parabolic."""
    cfg = cfg or QuadratureConfig()
    v = _kernel_integral(mm, 1.0, cfg)
    with np.errstate(under="ignore"):
        return v.scaled(math.exp(-(mm.m - 1) * float(mm.warp.log_sigma(1.0))))


def classify_stochastic(mm: ModelManifold, cfg: QuadratureConfig | None = None) -> IntegralVerdict:
    """Verdict on int_0^inf (int_0^t sigma^{m-1}) / sigma^{m-1}(t) dt.

    Divergent: stochastically complete. Convergent: stochastically incomplete.
    """
    cfg = cfg or QuadratureConfig()
    f, upper, breaks = ratio_integrand(mm, cfg)
    return classify_improper(f, 0.0, cfg, upper_limit=upper, breakpoints=breaks)


def classify_l1(mm: ModelManifold, cfg: QuadratureConfig | None = None, *,
                parabolic: IntegralVerdict | None = None,
                stochastic: IntegralVerdict | None = None) -> IntegralVerdict:
    """Green mass int_M G(o, y) dv(y); Divergent means L1-Liouville.

    Computed in the swapped single-integral form, where c_m * omega_{m-1} = 1.
    """
    cfg = cfg or QuadratureConfig()
    parabolic = parabolic or classify_parabolic(mm, cfg)
    if parabolic.divergent:
        return IntegralVerdict(DIVERGENT, witness_cutoff=parabolic.witness_cutoff,
                               partial_value=math.inf, reason="parabolic: G is identically +inf")
    return stochastic or classify_stochastic(mm, cfg)


def tonelli_check(mm: ModelManifold, cfg: QuadratureConfig | None = None, *,
                  stochastic: IntegralVerdict | None = None) -> float:
    """Relative difference between the two orders of integration of the Green mass."""
    cfg = cfg or QuadratureConfig()
    swapped = stochastic or classify_stochastic(mm, cfg)
    if not swapped.convergent:
        raise PreconditionError(f"Green mass is not finite (swapped form {swapped.outcome})")
    w, m = mm.warp, mm.m
    double = classify_improper(lambda r: tail_ratio(w, m, r), 0.0, cfg, upper_limit=w.domain_end)
    if not double.convergent:
        raise PreconditionError(f"double-integral form is {double.outcome}")
    A, B = double.value, swapped.value
    return abs(A - B) / max(abs(A), abs(B))


def log_ball_volume(mm: ModelManifold, r) -> np.ndarray:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    return (math.log(mm.omega) + (mm.m - 1) * mm.warp.log_sigma(r)
            + np.log(mass_ratio(mm.warp, mm.m, r)))


def volume_growth_threshold(mm: ModelManifold) -> float:
    """Radius where vol B_r = e (log vol = 1)."""
    def h(r):
        return float(log_ball_volume(mm, r)[0]) - 1.0

    hi = 1.0
    while h(hi) <= 0:
        hi *= 2.0
        if hi > mm.warp.domain_end:
            raise PreconditionError("volume never exceeds e on the domain")
    lo = hi / 2.0
    while h(lo) > 0:
        lo /= 2.0
    return brentq(h, lo, hi, xtol=1e-14, rtol=1e-14)


def volume_growth_criterion(mm: ModelManifold, cfg: QuadratureConfig | None = None) -> IntegralVerdict:
    """Verdict on int^inf r / log vol B_r. Divergent: completeness guaranteed.

    Convergent only means the sufficient condition is silent.
    """
    cfg = cfg or QuadratureConfig()
    r_star = volume_growth_threshold(mm)

    def f(r):
        r = np.asarray(r, dtype=float)
        return r / log_ball_volume(mm, r)

    return classify_improper(f, r_star, cfg, upper_limit=mm.warp.domain_end)


def exit_time_ball(mm: ModelManifold, r: float, R: float,
                   cfg: QuadratureConfig | None = None) -> float:
    """F_R(r) = int_r^R mass_ratio: the mean exit time from B_R(o) started at distance r."""
    if not (0 <= r <= R):
        raise PreconditionError(f"need 0 <= r <= R, got r={r!r}, R={R!r}")
    w, m = mm.warp, mm.m
    val, _ = integrate_finite(lambda t: mass_ratio(w, m, t), float(r), float(R),
                              cfg or EXIT_TIME_CFG)
    return val


def global_exit_time(mm: ModelManifold, r: float = 0.0,
                     cfg: QuadratureConfig | None = None) -> IntegralVerdict:
    """Verdict on F(r) = int_r^inf mass_ratio (the global mean exit time bound)."""
    if r < 0:
        raise PreconditionError("r must be >= 0")
    cfg = cfg or QuadratureConfig()
    f, upper, breaks = ratio_integrand(mm, cfg)
    return classify_improper(f, float(r), cfg, upper_limit=upper, breakpoints=breaks)


@dataclass
class ExitProfile:
    mm: ModelManifold
    cfg: QuadratureConfig = field(default_factory=QuadratureConfig)

    def F_R(self, r: float, R: float) -> float:
        return exit_time_ball(self.mm, r, R)

    def F(self, r: float) -> IntegralVerdict:
        return global_exit_time(self.mm, r, self.cfg)

    @property
    def E_global_verdict(self) -> IntegralVerdict:
        return self.F(0.0)


@dataclass
class ComparisonResult:
    conclusion: str
    verdict: IntegralVerdict
    bound: Callable[[float], float] | None = None

    @property
    def not_l1(self) -> bool:
        return self.bound is not None


def comparison_not_l1(mm: ModelManifold, cfg: QuadratureConfig | None = None) -> ComparisonResult:
    """Comparison conclusion for a manifold whose distance function satisfies
    Delta r >= (m-1) sigma'/sigma (caller-asserted): if F(0) < inf the manifold
    is not L1-Liouville and its global mean exit time is bounded by F(r(x))."""
    cfg = cfg or QuadratureConfig()
    v = global_exit_time(mm, 0.0, cfg)
    if not v.convergent:
        return ComparisonResult("no conclusion", v)
    F0 = v.value

    def bound(r: float) -> float:
        if r == 0:
            return F0
        return F0 - exit_time_ball(mm, 0.0, r)

    return ComparisonResult("NOT L1-Liouville under hypothesis, with E(x) <= F(r(x))", v, bound)


def tri_state(v: IntegralVerdict) -> str:
    return {DIVERGENT: "yes", CONVERGENT: "no"}.get(v.outcome, "unknown")


@dataclass
class ClassificationReport:
    parabolic: str
    stochastically_complete: str
    l1_liouville: str
    volume_growth_sufficient: str
    green_mass: IntegralVerdict
    tonelli_reldiff: float | None = None
    provenance: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        sc, l1 = self.stochastically_complete, self.l1_liouville
        if "unknown" not in (sc, l1) and sc != l1:
            raise ConsistencyError(f"model identity violated: SC={sc}, L1={l1}")
        if self.parabolic == "yes" and l1 == "no":
            raise ConsistencyError("parabolic model reported as not L1-Liouville")
        if self.volume_growth_sufficient == "yes" and sc == "no":
            raise ConsistencyError("volume growth criterion fired on an incomplete model")

    @property
    def determined(self) -> bool:
        return "unknown" not in (self.parabolic, self.stochastically_complete,
                                 self.l1_liouville, self.volume_growth_sufficient)

    def to_dict(self) -> dict:
        gm: dict = {"verdict": self.green_mass.outcome}
        if self.green_mass.convergent:
            gm["value"] = self.green_mass.value
            gm["error"] = self.green_mass.error
        d = {
            "parabolic": self.parabolic,
            "stochastically_complete": self.stochastically_complete,
            "l1_liouville": self.l1_liouville,
            "volume_growth_sufficient": self.volume_growth_sufficient,
            "green_mass": gm,
        }
        if self.tonelli_reldiff is not None:
            d["tonelli_reldiff"] = self.tonelli_reldiff
        d["provenance"] = self.provenance
        return d


def classification_report(mm: ModelManifold, cfg: QuadratureConfig | None = None) -> ClassificationReport:
    cfg = cfg or QuadratureConfig()
    par = classify_parabolic(mm, cfg)
    sto = classify_stochastic(mm, cfg)
    l1 = classify_l1(mm, cfg, parabolic=par, stochastic=sto)
    try:
        vol = volume_growth_criterion(mm, cfg)
    except PreconditionError as exc:
        vol = IntegralVerdict(INCONCLUSIVE, reason=str(exc))
    reldiff = None
    if sto.convergent:
        try:
            reldiff = tonelli_check(mm, cfg, stochastic=sto)
        except PreconditionError:
            reldiff = None
    provenance = {
        "model": mm.spec(),
        "quadrature": {"abs_tol": cfg.abs_tol, "rel_tol": cfg.rel_tol, "R0": cfg.R0,
                       "j_max": cfg.j_max, "divergence_threshold": cfg.divergence_threshold,
                       "window": cfg.window},
        "cutoffs": {"parabolic": list(par.cutoffs), "stochastic": list(sto.cutoffs),
                    "volume_growth": list(vol.cutoffs)},
    }
    return ClassificationReport(
        parabolic=tri_state(par), stochastically_complete=tri_state(sto),
        l1_liouville=tri_state(l1), volume_growth_sufficient=tri_state(vol),
        green_mass=l1, tonelli_reldiff=reldiff, provenance=provenance,
        verdicts={"parabolic": par, "stochastic": sto, "l1": l1, "volume_growth": vol})
