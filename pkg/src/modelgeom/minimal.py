"""The sigma-side of the exit-time comparison for minimal submanifolds of an
ambient space with radial sectional curvature K <= -G(rho).

Solves sigma'' = G sigma, sigma(0) = 0, sigma'(0) = 1, then checks
sigma' >= 0, the ratio condition sigma^{m-1}/int_0^t sigma^{m-1} <= m sigma'/sigma,
and integrability of the model exit-time integrand.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import criteria
from .quad import IntegralVerdict, QuadratureConfig
from .warp import ModelManifold, Tabulated, WarpingFunction


class HypothesisError(ValueError):
    pass


@dataclass(frozen=True)
class CurvatureProfile:
    """Curvature bound G on [0, inf) (its even extension is implicit)."""

    kind: str
    params: tuple = ()
    fn: Callable | None = field(default=None, compare=False)
    label: str = ""

    @classmethod
    def constant(cls, c: float) -> "CurvatureProfile":
        return cls("constant", (float(c),), label=f"const:{c:g}")

    @classmethod
    def polynomial(cls, coeffs) -> "CurvatureProfile":
        """G(t) = sum_i coeffs[i] * t^(2i)."""
        coeffs = tuple(float(c) for c in coeffs)
        return cls("polynomial", coeffs, label="poly:" + ",".join(f"{c:g}" for c in coeffs))

    @classmethod
    def custom(cls, fn: Callable, label: str = "custom") -> "CurvatureProfile":
        return cls("custom", (), fn, label)

    @classmethod
    def riccati_power(cls, c: float, k: float) -> "CurvatureProfile":
        """G = y^2 + y' for y = c t^k, so that sigma'/sigma -> c t^k."""
        c, k = float(c), float(k)

        def fn(t):
            t = np.asarray(t, dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                dy = c * k * t ** (k - 1) if k != 0 else 0.0 * t
            return (c * t ** k) ** 2 + dy

        return cls("custom", (c, k), fn, f"poly-sq:{c:g}t^{k:g}")

    @classmethod
    def parse(cls, text: str) -> "CurvatureProfile":
        """Parse ``const:C``, ``poly:c0,c1,...`` (coefficients in t^2) or ``poly-sq:Ct^K``."""
        text = text.strip()
        kind, _, body = text.partition(":")
        try:
            if kind == "const":
                return cls.constant(float(body))
            if kind == "poly":
                return cls.polynomial(float(x) for x in body.split(","))
            if kind == "poly-sq":
                m = re.fullmatch(r"\s*([-+0-9.eE]*)\s*\*?\s*t\s*(?:\^\s*([-+0-9.eE]+))?\s*", body)
                if not m:
                    raise ValueError(body)
                c = float(m.group(1)) if m.group(1) not in ("", "+", "-") else float(m.group(1) + "1")
                k = float(m.group(2)) if m.group(2) else 1.0
                return cls.riccati_power(c, k)
        except ValueError as exc:
            raise ValueError(f"bad curvature profile {text!r}: {exc}") from None
        raise ValueError(f"unknown curvature profile {text!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.params[0])
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(t * t, self.params)
        return np.asarray(self.fn(t), dtype=float)


def solve_warping_ivp(G: CurvatureProfile, t_max: float, h: float = 1e-3) -> Tabulated:
    """Classical RK4 for (sigma, sigma') with sigma'' = G sigma.

    The state is renormalized whenever it grows past 1e100 (the ODE is linear,
    so this is exact) and log sigma is tabulated, so super-exponential
    solutions are fine. A sign change of sigma truncates the table just
    before the conjugate point, which is recorded on the returned warp.
    """
    if not (t_max > 0 and h > 0):
        raise ValueError("t_max and h must be positive")
    n = int(round(t_max / h))
    if n < 2:
        raise ValueError("t_max must span at least two steps")
    h = t_max / n
    ts = np.arange(n + 1) * h
    log_s = np.full(n + 1, -np.inf)
    dlog = np.full(n + 1, np.nan)
    s, p, shift = 0.0, 1.0, 0.0
    cs = cp = 0.0  # Kahan compensation for the state updates
    truncated = None

    def f(t, s, p):
        return p, float(G(t)) * s

    last = n
    for i in range(n):
        t = ts[i]
        k1s, k1p = f(t, s, p)
        k2s, k2p = f(t + h / 2, s + h / 2 * k1s, p + h / 2 * k1p)
        k3s, k3p = f(t + h / 2, s + h / 2 * k2s, p + h / 2 * k2p)
        k4s, k4p = f(t + h, s + h * k3s, p + h * k3p)
        ds = h / 6 * (k1s + 2 * k2s + 2 * k3s + k4s) - cs
        dp = h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p) - cp
        s_new, p_new = s + ds, p + dp
        if s_new <= 0:
            # linear interpolation of the zero between t_i and t_{i+1}
            truncated = float(t + h * s / (s - s_new))
            last = i
            break
        cs, cp = (s_new - s) - ds, (p_new - p) - dp
        s, p = s_new, p_new
        big = max(abs(s), abs(p))
        if big > 1e100:
            shift += math.log(big)
            s, p, cs, cp = s / big, p / big, cs / big, cp / big
        log_s[i + 1] = math.log(s) + shift
        dlog[i + 1] = p / s
    if last < 2:
        raise HypothesisError("conjugate point too close to the origin to tabulate")
    keep = slice(0, last + 1)
    dl = dlog[keep].copy()
    if truncated is not None:
        # the node nearest the conjugate point is dropped to keep log sigma tame
        keep = slice(0, last)
        dl = dlog[keep].copy()
    return Tabulated(ts[keep], log_sigma=log_s[keep], dlog=dl, profile=G,
                     truncated_at=truncated, source=f"ivp:{G.label}")


def _sigma_prime_violation(w: WarpingFunction, t: np.ndarray) -> float | None:
    # sigma > 0 off the pole, so sign(sigma') = sign(log sigma)'
    neg = w.dlog(t) < 0
    return float(t[np.argmax(neg)]) if neg.any() else None


def sigma_condition_margin(w: WarpingFunction, m: int, t) -> np.ndarray:
    """m sigma'/sigma - sigma^{m-1}/int_0^t sigma^{m-1}, multiplied by t for t < 1e-3
    where both terms blow up like m/t."""
    t = np.asarray(t, dtype=float)
    if isinstance(w, Tabulated):
        W = criteria.mass_ratio_tabulated(w, m, t)
    else:
        W = criteria.mass_ratio(w, m, t)
    y = w.dlog(t)
    small = t < 1e-3
    return np.where(small, t * m * y - t / W, m * y - 1.0 / W)


def check_sigma_condition(w: WarpingFunction, m: int, t_range=None, n_samples: int = 2000):
    """Returns (passed, min_margin, argmin_t). Raises HypothesisError if sigma' < 0."""
    lo, hi = t_range if t_range is not None else (1e-4, w.domain_end if math.isfinite(w.domain_end) else 20.0)
    if not (0 < lo < hi <= w.domain_end):
        raise ValueError("t_range must lie inside (0, domain end]")
    t = np.geomspace(lo, hi, n_samples)
    bad = _sigma_prime_violation(w, t)
    if bad is not None:
        raise HypothesisError(f"sigma' < 0 at t={bad!r}")
    margin = sigma_condition_margin(w, m, t)
    i = int(np.argmin(margin))
    return bool(margin[i] >= -1e-9), float(margin[i]), float(t[i])


def check_f_integrability(w: WarpingFunction, m: int, cfg: QuadratureConfig | None = None) -> IntegralVerdict:
    """Verdict on int^inf (int_0^t sigma^{m-1}) / sigma^{m-1}; Convergent means the
    comparison conclusion is available."""
    return criteria.classify_stochastic(ModelManifold(m, w), cfg)


@dataclass
class HypothesisReport:
    sigma_nonneg_deriv: bool
    first_violation: float | None
    sigma_condition: dict | None
    f_integrability: IntegralVerdict | None
    conclusion: str
    domain_truncated_at: float | None = None
    scan_range: tuple | None = None
    warp: WarpingFunction | None = field(default=None, repr=False)
    m: int = 2

    @property
    def all_pass(self) -> bool:
        return (self.sigma_nonneg_deriv and bool(self.sigma_condition and self.sigma_condition["pass"])
                and self.f_integrability is not None and self.f_integrability.convergent)

    @property
    def inconclusive(self) -> bool:
        return (self.sigma_nonneg_deriv and bool(self.sigma_condition and self.sigma_condition["pass"])
                and (self.f_integrability is None or self.f_integrability.inconclusive))

    def bound(self, r: float, R: float) -> float:
        """F_R(r), the upper bound for the mean exit time of f^{-1}(B_R) at rho = r."""
        if not self.all_pass:
            raise HypothesisError("theorem hypotheses not all satisfied")
        return criteria.exit_time_ball(ModelManifold(self.m, self.warp), r, R)

    def to_dict(self) -> dict:
        d = {
            "sigma_nonneg_deriv": self.sigma_nonneg_deriv,
            "sigma_condition": self.sigma_condition,
            "f_integrability": None if self.f_integrability is None else self.f_integrability.to_dict(),
            "conclusion": self.conclusion,
        }
        if self.first_violation is not None:
            d["first_violation"] = self.first_violation
        if self.scan_range is not None:
            d["scan_range"] = list(self.scan_range)
        if self.domain_truncated_at is not None:
            d["domain_truncated_at"] = self.domain_truncated_at
        return d


CONCLUSION_YES = "Sigma not L1-Liouville (under theorem hypotheses)"


def minimal_report(G: CurvatureProfile, m: int, t_max: float = 20.0, h: float = 1e-3,
                   cfg: QuadratureConfig | None = None, n_samples: int = 2000) -> HypothesisReport:
    w = solve_warping_ivp(G, t_max, h)
    t_end = w.domain_end
    grid = w.nodes[1:]
    neg = w.node_dlog[1:] < 0
    first = float(grid[np.argmax(neg)]) if neg.any() else None
    common = dict(domain_truncated_at=w.truncated_at, warp=w, m=m)
    if first is not None:
        return HypothesisReport(False, first, None, None,
                                "no conclusion: sigma' < 0 somewhere", **common)
    lo = min(1e-4, t_end / 10)
    ok, margin, arg = check_sigma_condition(w, m, (lo, t_end), n_samples)
    sc = {"pass": ok, "min_margin": margin, "argmin_t": arg}
    fi = check_f_integrability(w, m, cfg)
    if not ok:
        text = "no conclusion: sigma condition fails"
    elif fi.convergent:
        text = CONCLUSION_YES
    elif fi.divergent:
        text = "no conclusion: exit-time integrand not integrable (model is L1-Liouville)"
    else:
        text = "no conclusion: integrability inconclusive"
    return HypothesisReport(True, None, sc, fi, text, scan_range=(lo, t_end), **common)


@dataclass
class MonotonicityResult:
    holds: bool
    F_m: float
    F_n: float

    @property
    def difference(self) -> float:
        return self.F_m - self.F_n


def dimension_monotonicity_check(w: WarpingFunction, m: int, n: int, r: float, R: float,
                                 n_scan: int = 400) -> MonotonicityResult:
    """F^{(n)}_R(r) <= F^{(m)}_R(r) for n >= m when sigma is nondecreasing."""
    if not (2 <= m <= n):
        raise ValueError("need 2 <= m <= n")
    ts = np.linspace(0.0, R, n_scan)[1:]
    bad = _sigma_prime_violation(w, ts)
    if bad is not None:
        raise HypothesisError(f"sigma' < 0 at t={bad!r}")
    Fm = criteria.exit_time_ball(ModelManifold(m, w), r, R)
    Fn = Fm if n == m else criteria.exit_time_ball(ModelManifold(n, w), r, R)
    return MonotonicityResult(Fm - Fn >= -1e-10, Fm, Fn)
