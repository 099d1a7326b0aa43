"""Adaptive Gauss-Kronrod quadrature and a three-way classifier for
improper integrals of nonnegative functions on ``[a, +inf)``.

Integrands are vectorized: they take a 1-D float array of abscissae and
return an array of the same shape.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

Integrand = Callable[[np.ndarray], np.ndarray]

# 7-point Gauss / 15-point Kronrod pair (QUADPACK qk15 constants).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# Full symmetric node/weight vectors on [-1, 1].
KRONROD_NODES = np.concatenate([-_XGK[:-1], [0.0], _XGK[-2::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], [_WGK[-1]], _WGK[-2::-1]])
_gauss_full = np.zeros(15)
_gauss_full[1:7:2] = _WG[:3]
_gauss_full[7] = _WG[3]
_gauss_full[9:15:2] = _WG[2::-1]
GAUSS_WEIGHTS = _gauss_full


class QuadratureError(ArithmeticError):
    """Base class for quadrature failures."""


class IntegrandError(QuadratureError):
    def __init__(self, message: str, location: float):
        super().__init__(f"{message} at t={location!r}")
        self.location = location


class AccuracyError(QuadratureError):
    def __init__(self, value: float, error: float, message: str = "subdivision budget exhausted"):
        super().__init__(f"{message}: best estimate {value!r} +/- {error!r}")
        self.value = value
        self.error = error


class NegativeIntegrandError(ValueError):
    def __init__(self, location: float, value: float):
        super().__init__(f"integrand is negative ({value!r}) at t={location!r}")
        self.location = location


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    R0: float = 8.0
    j_max: int = 40
    divergence_threshold: float = 1e12
    window: int = 4
    max_intervals: int = 4000

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.R0 <= 0:
            raise ValueError("R0 must be positive")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.j_max < self.window + 2:
            raise ValueError("j_max must be >= window + 2")
        if self.divergence_threshold <= 0:
            raise ValueError("divergence_threshold must be positive")

    def tightened(self, factor: float) -> "QuadratureConfig":
        return replace(self, abs_tol=self.abs_tol * factor, rel_tol=self.rel_tol * factor)


CONVERGENT = "convergent"
DIVERGENT = "divergent"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class IntegralVerdict:
    outcome: str
    value: float | None = None
    error: float | None = None
    witness_cutoff: float | None = None
    partial_value: float | None = None
    cutoffs: tuple = ()
    partials: tuple = ()
    ratios: tuple = ()
    reason: str = ""

    @property
    def convergent(self) -> bool:
        return self.outcome == CONVERGENT

    @property
    def divergent(self) -> bool:
        return self.outcome == DIVERGENT

    @property
    def inconclusive(self) -> bool:
        return self.outcome == INCONCLUSIVE

    def scaled(self, c: float) -> "IntegralVerdict":
        """Same verdict for ``c * f`` with ``c > 0``."""
        def mul(x):
            return None if x is None else c * x
        return replace(self, value=mul(self.value), error=mul(self.error),
                       partial_value=mul(self.partial_value),
                       partials=tuple(c * p for p in self.partials))

    def to_dict(self) -> dict:
        d: dict = {"verdict": self.outcome}
        if self.outcome == CONVERGENT:
            d["value"] = self.value
            d["error"] = self.error
        elif self.outcome == DIVERGENT:
            d["witness_cutoff"] = self.witness_cutoff
            d["partial_value"] = self.partial_value
        else:
            d["reason"] = self.reason
            d["cutoffs"] = list(self.cutoffs)
            d["partials"] = list(self.partials)
            d["ratios"] = list(self.ratios)
        return d


def _checked(f: Integrand, x: np.ndarray) -> np.ndarray:
    y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape)
    bad = ~np.isfinite(y)
    if bad.any():
        i = int(np.argmax(bad))
        raise IntegrandError(f"non-finite integrand value {y[i]!r}", float(x[i]))
    return y


def gk15(f: Integrand, a: float, b: float) -> tuple[float, float]:
    """One Gauss-Kronrod 7/15 panel. Returns (integral, error estimate)."""
    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * KRONROD_NODES
    y = _checked(f, x)
    resk = float(KRONROD_WEIGHTS @ y)
    k = half * resk
    g = half * float(GAUSS_WEIGHTS @ y)
    return k, _qk_error(k, g, y, half, 0.5 * resk)


def _qk_error(k, g, y, half, reskh) -> float:
    # QUADPACK error heuristic.
    resasc = abs(half) * float(KRONROD_WEIGHTS @ np.abs(y - reskh))
    err = abs(k - g)
    if resasc != 0.0 and err != 0.0:
        err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
    resabs = abs(half) * float(KRONROD_WEIGHTS @ np.abs(y))
    if resabs > np.finfo(float).tiny / (50 * np.finfo(float).eps):
        err = max(err, 50 * np.finfo(float).eps * resabs)
    return err


def integrate_finite(f: Integrand, a: float, b: float, cfg: QuadratureConfig | None = None,
                     *, abs_tol: float | None = None, rel_tol: float | None = None,
                     max_intervals: int | None = None) -> tuple[float, float]:
    """Globally adaptive Gauss-Kronrod integration of ``f`` over ``[a, b]``.

    Nodes never touch the endpoints, so integrable endpoint singularities
    are allowed. Returns ``(value, error_estimate)``.
    """
    cfg = cfg or QuadratureConfig()
    atol = cfg.abs_tol if abs_tol is None else abs_tol
    rtol = cfg.rel_tol if rel_tol is None else rel_tol
    limit = cfg.max_intervals if max_intervals is None else max_intervals
    if not (a <= b):
        raise ValueError(f"need a <= b, got a={a!r}, b={b!r}")
    if a == b:
        return 0.0, 0.0
    v, e = gk15(f, a, b)
    heap = [(-e, a, b, v)]
    total, err = v, e
    n = 1
    while err > max(atol, rtol * abs(total)):
        if n >= limit:
            raise AccuracyError(total, err)
        neg_e, lo, hi, v = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            # interval cannot be split further in floating point
            heapq.heappush(heap, (neg_e, lo, hi, v))
            raise AccuracyError(total, err, "interval collapsed below machine resolution")
        v1, e1 = gk15(f, lo, mid)
        v2, e2 = gk15(f, mid, hi)
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
        n += 1
        total += v1 + v2 - v
        err += e1 + e2 + neg_e
        if n % 64 == 0 or err <= max(atol, rtol * abs(total)):
            # resum to avoid drift from repeated subtraction
            total = math.fsum(item[3] for item in heap)
            err = math.fsum(-item[0] for item in heap)
    return total, err


def _split(f, lo, hi, breaks, cfg):
    pts = [lo] + [x for x in sorted(breaks) if lo < x < hi] + [hi]
    v = e = 0.0
    for p, q in zip(pts[:-1], pts[1:]):
        dv, de = integrate_finite(f, p, q, cfg)
        v += dv
        e += de
    return v, e


def _nonnegative(f: Integrand) -> Integrand:
    def g(x):
        y = np.asarray(f(x), dtype=float)
        neg = y < 0
        if neg.any():
            i = int(np.argmax(neg))
            raise NegativeIntegrandError(float(np.ravel(x)[i]), float(np.ravel(y)[i]))
        return y
    return g


def classify_improper(f: Integrand, a: float, cfg: QuadratureConfig | None = None, *,
                      upper_limit: float = math.inf,
                      breakpoints: Sequence[float] = ()) -> IntegralVerdict:
    """Decide whether ``int_a^inf f`` converges, for ``f >= 0``.

    Partial integrals are taken at cutoffs ``R_j = R0 * 2**j``. The verdict is
    Divergent once a partial integral reaches the divergence threshold or the
    increments stop decreasing for ``window`` doublings while still growing.
    It is Convergent once the increments have halved over ``window`` doublings,
    decreased monotonically along the way, and two successive geometric-tail
    extrapolations agree within tolerance. Anything else is Inconclusive.
    ``upper_limit`` caps the cutoffs for integrands known only on a finite range.
    """
    cfg = cfg or QuadratureConfig()
    if a < 0:
        raise ValueError("lower limit must be >= 0")
    w = cfg.window
    g = _nonnegative(f)
    R0 = cfg.R0 if cfg.R0 > a else 2.0 * a if a > 0 else cfg.R0
    cutoffs = [R0 * 2.0 ** j for j in range(cfg.j_max + 1)]
    usable = [R for R in cutoffs if R <= upper_limit]
    diag_c: list[float] = []
    diag_p: list[float] = []
    diag_r: list[float] = []

    def inconclusive(reason):
        return IntegralVerdict(INCONCLUSIVE, cutoffs=tuple(diag_c), partials=tuple(diag_p),
                               ratios=tuple(diag_r), reason=reason)

    if len(usable) < 2:
        return inconclusive(f"integrand known only up to {upper_limit!r}; fewer than two cutoffs fit")

    I, qerr = _split(g, a, usable[0], breakpoints, cfg)
    diag_c.append(usable[0])
    diag_p.append(I)
    incs: list[float] = []
    errs: list[float] = []
    extrap: list[float] = []
    D = cfg.divergence_threshold
    for j in range(1, len(usable)):
        lo, hi = usable[j - 1], usable[j]
        d, de = _split(g, lo, hi, breakpoints, cfg)
        prev = I
        I = prev + d
        qerr += de
        incs.append(d)
        errs.append(de)
        diag_c.append(hi)
        diag_p.append(I)
        if len(incs) >= 2 and incs[-2] > 0:
            diag_r.append(incs[-1] / incs[-2])
        if I >= D:
            return IntegralVerdict(DIVERGENT, witness_cutoff=hi, partial_value=I,
                                   cutoffs=tuple(diag_c), partials=tuple(diag_p),
                                   ratios=tuple(diag_r), reason="partial integral exceeded threshold")
        k = len(incs)
        if k >= w + 1:
            win = incs[-(w + 1):]
            ewin = errs[-(w + 1):]
            grows = all(win[i + 1] >= win[i] * (1 - 1e-9) - (ewin[i] + ewin[i + 1])
                        for i in range(w))
            if grows and win[-1] > cfg.abs_tol:
                return IntegralVerdict(DIVERGENT, witness_cutoff=hi, partial_value=I,
                                       cutoffs=tuple(diag_c), partials=tuple(diag_p),
                                       ratios=tuple(diag_r),
                                       reason="increments non-decreasing over window")
        # geometric tail extrapolation from the last two increments
        if k >= 2 and incs[-2] > 0 and incs[-1] < incs[-2]:
            rho = incs[-1] / incs[-2]
            extrap.append(I + incs[-1] * rho / (1.0 - rho))
        elif k >= 1 and incs[-1] == 0.0:
            extrap.append(I)
        else:
            extrap.append(math.nan)
        if k >= w + 1:
            win = incs[-(w + 1):]
            ewin = errs[-(w + 1):]
            decays = win[-1] <= 0.5 * win[0] + ewin[-1] and all(
                win[i + 1] <= win[i] * (1 + 1e-9) + (ewin[i] + ewin[i + 1]) for i in range(w))
            if decays and len(extrap) >= 2 and not math.isnan(extrap[-1]) and not math.isnan(extrap[-2]):
                value = extrap[-1]
                err = abs(extrap[-1] - extrap[-2]) + qerr
                if err <= max(cfg.abs_tol, cfg.rel_tol * abs(value)):
                    return IntegralVerdict(CONVERGENT, value=value, error=err,
                                           cutoffs=tuple(diag_c), partials=tuple(diag_p),
                                           ratios=tuple(diag_r))
    if len(usable) < len(cutoffs):
        return inconclusive(f"integrand known only up to {upper_limit!r}")
    return inconclusive("cutoff schedule exhausted without a decision")


def conservative_tail(verdict: IntegralVerdict) -> float | None:
    """Last-increment geometric tail bound with the decay ratio clamped below at 1/2."""
    p = verdict.partials
    if len(p) < 3:
        return None
    d1, d0 = p[-1] - p[-2], p[-2] - p[-3]
    if d0 <= 0:
        return 0.0 if d1 <= 0 else None
    rho = max(d1 / d0, 0.5)
    if rho >= 1:
        return math.inf
    return d1 / (1.0 - rho)


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


__all__ = [
    "QuadratureConfig", "IntegralVerdict", "integrate_finite", "classify_improper",
    "gk15", "conservative_tail", "QuadratureError", "IntegrandError", "AccuracyError",
    "NegativeIntegrandError", "CONVERGENT", "DIVERGENT", "INCONCLUSIVE",
    "KRONROD_NODES", "KRONROD_WEIGHTS", "GAUSS_WEIGHTS",
]
