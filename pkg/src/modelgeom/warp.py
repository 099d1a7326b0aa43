"""Warping functions sigma and the model manifolds M^m_sigma they define.

Every family is evaluated through ``log sigma`` and its derivatives so that
super-exponential warps (sigma ~ exp(t^3)) stay representable far beyond the
point where sigma itself overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .quad import QuadratureConfig, integrate_finite


class WarpingError(ValueError):
    """Invalid family parameters or tabulated data."""


class DomainError(ValueError):
    """Evaluation outside the domain of a warping function."""


def unit_sphere_area(m: int) -> float:
    """Area omega_{m-1} of the unit sphere bounding the unit ball of R^m."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return 2.0 * math.pi ** (m / 2.0) / math.gamma(m / 2.0)


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise WarpingError(f"parameter {name} must be a positive finite number, got {value!r}")
    return value


class WarpingFunction:
    """Base class. Subclasses implement ``log_sigma``, ``dlog`` and ``d2log``
    (the log-derivatives L = log sigma, L', L''), all vectorized over t > 0.
    """

    family: str = ""
    domain_end: float = math.inf
    super_exponential: bool = False

    # -- log-space interface -------------------------------------------------
    def log_sigma(self, t):
        raise NotImplementedError

    def dlog(self, t):
        """sigma'/sigma."""
        raise NotImplementedError

    def d2log(self, t):
        raise NotImplementedError

    def log_increment(self, t, u):
        """L(t + u) - L(t) for u >= -t, evaluated without cancellation when
        the family allows it."""
        t = np.asarray(t, dtype=float)
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            return self.log_sigma(t + u) - self.log_sigma(t)

    # -- value interface -------------------------------------------------------
    def _sigma(self, t):
        with np.errstate(over="ignore"):
            return np.exp(self.log_sigma(t))

    def _dsigma(self, t):
        return self._sigma(t) * self.dlog(t)

    def _d2sigma(self, t):
        d = self.dlog(t)
        return self._sigma(t) * (self.d2log(t) + d * d)

    def check_domain(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > self.domain_end):
            bad = t[(~np.isfinite(t)) | (t < 0) | (t > self.domain_end)]
            raise DomainError(f"t={float(np.ravel(bad)[0])!r} outside the domain "
                              f"[0, {self.domain_end!r}] of the {self.family} warp")
        return t

    def eval(self, t, order: int = 0):
        """sigma(t), sigma'(t) or sigma''(t)."""
        t = self.check_domain(t)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.empty_like(t)
        zero = t == 0
        pos = ~zero
        if order == 0:
            out[zero] = 0.0
            out[pos] = self._sigma(t[pos])
        elif order == 1:
            out[zero] = 1.0
            out[pos] = self._dsigma(t[pos])
        elif order == 2:
            out[zero] = self._d2sigma_at_zero()
            out[pos] = self._d2sigma(t[pos])
        else:
            raise ValueError("derivative order must be 0, 1 or 2")
        return float(out[0]) if scalar else out

    def _d2sigma_at_zero(self) -> float:
        return 0.0

    def __call__(self, t):
        return self.eval(t, 0)

    def spec(self) -> dict:
        return {"family": self.family}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.spec().items() if k != "family")
        return f"{type(self).__name__}({args})"


class Euclidean(WarpingFunction):
    family = "euclidean"

    def log_sigma(self, t):
        with np.errstate(divide="ignore"):
            return np.log(t)

    def dlog(self, t):
        return 1.0 / np.asarray(t, dtype=float)

    def d2log(self, t):
        t = np.asarray(t, dtype=float)
        return -1.0 / (t * t)

    def log_increment(self, t, u):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log1p(np.asarray(u, dtype=float) / t)

    def _sigma(self, t):
        return np.asarray(t, dtype=float)

    def _dsigma(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def _d2sigma(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


def _log_sinh(x):
    x = np.asarray(x, dtype=float)
    big = x > 20
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where(big, x - math.log(2.0) + np.log1p(-np.exp(-2.0 * np.where(big, x, 20.0))),
                        np.log(np.sinh(np.where(big, 1.0, x))))


@dataclass(frozen=True, repr=False)
class Hyperbolic(WarpingFunction):
    """sigma(t) = sinh(k t) / k (constant curvature -k^2)."""

    k: float = 1.0
    family = "hyperbolic"

    def __post_init__(self):
        _positive("k", self.k)

    def log_sigma(self, t):
        return _log_sinh(self.k * np.asarray(t, dtype=float)) - math.log(self.k)

    def dlog(self, t):
        return self.k / np.tanh(self.k * np.asarray(t, dtype=float))

    def d2log(self, t):
        return -(self.k / np.sinh(self.k * np.asarray(t, dtype=float))) ** 2

    def log_increment(self, t, u):
        t, u = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(u, dtype=float))
        k = self.k
        ku = k * u
        small = np.abs(ku) < 1.0
        us = np.where(small, ku, 0.0)
        # sinh(k(t+u))/sinh(kt) = cosh(ku) + coth(kt) sinh(ku)
        arg = 2.0 * np.sinh(0.5 * us) ** 2 + np.sinh(us) / np.tanh(k * t)
        with np.errstate(divide="ignore", invalid="ignore"):
            near = np.log1p(np.maximum(arg, -1.0))
            far = _log_sinh(k * (t + u)) - _log_sinh(k * t)
        return np.where(small, near, far)

    def _sigma(self, t):
        with np.errstate(over="ignore"):
            return np.sinh(self.k * np.asarray(t, dtype=float)) / self.k

    def _dsigma(self, t):
        with np.errstate(over="ignore"):
            return np.cosh(self.k * np.asarray(t, dtype=float))

    def _d2sigma(self, t):
        with np.errstate(over="ignore"):
            return self.k * np.sinh(self.k * np.asarray(t, dtype=float))

    def spec(self):
        return {"family": self.family, "k": self.k}


@dataclass(frozen=True, repr=False)
class Spherical(WarpingFunction):
    """sigma(t) = sin(k t) / k on [0, pi/k] (constant curvature k^2)."""

    k: float = 1.0
    family = "spherical"

    def __post_init__(self):
        _positive("k", self.k)

    @property
    def domain_end(self):  # type: ignore[override]
        return math.pi / self.k

    def log_sigma(self, t):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(np.sin(self.k * np.asarray(t, dtype=float))) - math.log(self.k)

    def dlog(self, t):
        return self.k / np.tan(self.k * np.asarray(t, dtype=float))

    def d2log(self, t):
        return -(self.k / np.sin(self.k * np.asarray(t, dtype=float))) ** 2

    def _sigma(self, t):
        return np.sin(self.k * np.asarray(t, dtype=float)) / self.k

    def _dsigma(self, t):
        return np.cos(self.k * np.asarray(t, dtype=float))

    def _d2sigma(self, t):
        return -self.k * np.sin(self.k * np.asarray(t, dtype=float))

    def spec(self):
        return {"family": self.family, "k": self.k}


def _quintic_hermite(y0, y1) -> np.ndarray:
    """Coefficients c_0..c_5 of the quintic on [0, 1] with value, first and
    second derivative y0 at 0 and y1 at 1."""
    A = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, 1, 1, 1, 1, 1],
        [0, 1, 2, 3, 4, 5],
        [0, 0, 2, 6, 12, 20],
    ], dtype=float)
    return np.linalg.solve(A, np.array([*y0, *y1], dtype=float))


@dataclass(frozen=True, repr=False)
class SplicedExpPower(WarpingFunction):
    """sigma(t) = t on [0, t0/2], C exp(a t^p) on [t0, inf) with C = t0 exp(-a t0^p),
    and a quintic Hermite blend of log sigma in between (C^2 overall)."""

    a: float = 1.0
    p: float = 3.0
    t0: float = 1.0
    family = "spliced_exp_power"
    super_exponential = True

    def __post_init__(self):
        _positive("a", self.a)
        _positive("t0", self.t0)
        if not (float(self.p) > 1 and math.isfinite(self.p)):
            raise WarpingError(f"parameter p must be > 1, got {self.p!r}")
        a, p, t0 = self.a, self.p, self.t0
        t1 = 0.5 * t0
        d = t0 - t1
        left = (math.log(t1), d / t1, -(d / t1) ** 2)
        right = (math.log(t0), a * p * t0 ** (p - 1) * d, a * p * (p - 1) * t0 ** (p - 2) * d * d)
        object.__setattr__(self, "_coef", _quintic_hermite(left, right))
        object.__setattr__(self, "log_C", math.log(t0) - a * t0 ** p)

    @property
    def C(self) -> float:
        return math.exp(self.log_C)

    def _blend(self, t, order):
        t1 = 0.5 * self.t0
        d = self.t0 - t1
        x = (np.asarray(t, dtype=float) - t1) / d
        c = self._coef
        if order == 0:
            return np.polynomial.polynomial.polyval(x, c)
        if order == 1:
            return np.polynomial.polynomial.polyval(x, c[1:] * np.arange(1, 6)) / d
        return np.polynomial.polynomial.polyval(x, c[2:] * np.array([2, 6, 12, 20])) / (d * d)

    def _piecewise(self, t, f_id, f_blend, f_exp):
        t = np.asarray(t, dtype=float)
        t1 = 0.5 * self.t0
        out = np.empty(np.broadcast(t).shape)
        lo = t <= t1
        hi = t >= self.t0
        mid = ~(lo | hi)
        out[lo] = f_id(t[lo])
        out[mid] = f_blend(t[mid])
        out[hi] = f_exp(t[hi])
        return out

    def log_sigma(self, t):
        with np.errstate(divide="ignore"):
            return self._piecewise(t, np.log, lambda s: self._blend(s, 0),
                                   lambda s: self.log_C + self.a * s ** self.p)

    def dlog(self, t):
        return self._piecewise(t, lambda s: 1.0 / s, lambda s: self._blend(s, 1),
                               lambda s: self.a * self.p * s ** (self.p - 1))

    def d2log(self, t):
        return self._piecewise(t, lambda s: -1.0 / (s * s), lambda s: self._blend(s, 2),
                               lambda s: self.a * self.p * (self.p - 1) * s ** (self.p - 2))

    def log_increment(self, t, u):
        t, u = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(u, dtype=float))
        s = t + u
        both_exp = (t >= self.t0) & (s >= self.t0)
        both_id = (t <= 0.5 * self.t0) & (s <= 0.5 * self.t0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ratio = u / t
            exp_branch = self.a * t ** self.p * np.expm1(self.p * np.log1p(np.where(both_exp, ratio, 0.0)))
            id_branch = np.log1p(np.where(both_id, ratio, 0.0))
            rest = self.log_sigma(s) - self.log_sigma(t)
        return np.where(both_exp, exp_branch, np.where(both_id, id_branch, rest))

    def _sigma(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            return np.where(t <= 0.5 * self.t0, t, np.exp(self.log_sigma(t)))

    def spec(self):
        return {"family": self.family, "a": self.a, "p": self.p, "t0": self.t0}


class Tabulated(WarpingFunction):
    """Warping function given at nodes ``0 = t_0 < t_1 < ...``.

    The smooth quantity ``ell(t) = log(sigma(t)/t)`` (ell(0) = 0) is
    interpolated: cubic Hermite when sigma' is tabulated, monotone cubic
    otherwise. ``profile`` (a curvature function G with sigma'' = G sigma)
    supplies sigma'' directly when attached.
    """

    family = "tabulated"

    def __init__(self, t, sigma=None, dsigma=None, *, log_sigma=None, dlog=None,
                 profile: Callable | None = None, truncated_at: float | None = None,
                 source: str | None = None):
        t = np.asarray(t, dtype=float)
        if t.ndim != 1 or t.size < 3:
            raise WarpingError("tabulated warp needs at least 3 nodes")
        if t[0] != 0.0:
            raise WarpingError("tabulated abscissae must start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise WarpingError("tabulated abscissae must be strictly increasing")
        tp = t[1:]
        if log_sigma is None:
            if sigma is None:
                raise WarpingError("need sigma values")
            sigma = np.asarray(sigma, dtype=float)
            if sigma.shape != t.shape:
                raise WarpingError("sigma must have one value per node")
            if sigma[0] != 0.0:
                raise WarpingError(f"sigma(0) must be 0, got {sigma[0]!r}")
            if np.any(sigma[1:] <= 0) or not np.all(np.isfinite(sigma)):
                raise WarpingError("sigma must be finite and strictly positive off t = 0")
            logs = np.log(sigma[1:])
        else:
            logs = np.asarray(log_sigma, dtype=float)[1:]
        ell = np.concatenate([[0.0], logs - np.log(tp)])
        if dlog is None and dsigma is not None:
            dsigma = np.asarray(dsigma, dtype=float)
            if dsigma.shape != t.shape:
                raise WarpingError("sigma' must have one value per node")
            if abs(dsigma[0] - 1.0) > 1e-6:
                raise WarpingError(f"sigma'(0) must be 1, got {dsigma[0]!r}")
            dlog = np.concatenate([[np.nan], dsigma[1:] / sigma[1:]])
        if dlog is not None:
            dlog = np.asarray(dlog, dtype=float)
            dell = np.concatenate([[0.0], dlog[1:] - 1.0 / tp])
            self._ell = CubicHermiteSpline(t, ell, dell, extrapolate=False)
        else:
            if abs(ell[1]) > 0.05 * max(1.0, t[1]):
                raise WarpingError("tabulated data inconsistent with sigma'(0) = 1")
            self._ell = PchipInterpolator(t, ell, extrapolate=False)
        self._dell = self._ell.derivative()
        self._d2ell = self._dell.derivative()
        self.nodes = t
        self.node_log_sigma = np.concatenate([[-np.inf], logs])
        self.node_dlog = None if dlog is None else dlog
        self.profile = profile
        self.truncated_at = truncated_at
        self.source = source
        self.domain_end = float(t[-1])

    @classmethod
    def from_csv(cls, path) -> "Tabulated":
        """Read ``t,sigma[,dsigma]`` rows (header row optional)."""
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = [p.strip() for p in line.split(",")]
                try:
                    rows.append([float(p) for p in parts])
                except ValueError:
                    if rows:
                        raise WarpingError(f"malformed row in {path}: {line!r}")
                    continue  # header
        if not rows:
            raise WarpingError(f"no data rows in {path}")
        width = {len(r) for r in rows}
        if len(width) != 1 or width.pop() not in (2, 3):
            raise WarpingError("CSV rows must have 2 (t, sigma) or 3 (t, sigma, dsigma) columns")
        arr = np.array(rows)
        ds = arr[:, 2] if arr.shape[1] == 3 else None
        return cls(arr[:, 0], arr[:, 1], ds, source=str(path))

    def _ellv(self, t, which):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.domain_end) or np.any(t < 0):
            raise DomainError(f"t outside tabulated domain [0, {self.domain_end!r}]")
        return which(t)

    def log_sigma(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(t) + self._ellv(t, self._ell)

    def dlog(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 / t + self._ellv(t, self._dell)

    def d2log(self, t):
        t = np.asarray(t, dtype=float)
        if self.profile is not None:
            d = self.dlog(t)
            return np.asarray(self.profile(t), dtype=float) - d * d
        return -1.0 / (t * t) + self._ellv(t, self._d2ell)

    def log_increment(self, t, u):
        t, u = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(u, dtype=float))
        s = t + u
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log1p(u / t) + self._ellv(s, self._ell) - self._ellv(t, self._ell)

    def _sigma(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            return t * np.exp(self._ellv(t, self._ell))

    def _d2sigma(self, t):
        if self.profile is not None:
            return self._sigma(t) * np.asarray(self.profile(np.asarray(t, dtype=float)), dtype=float)
        return super()._d2sigma(t)

    def _d2sigma_at_zero(self) -> float:
        return 0.0 if self.profile is not None else float(2.0 * self._dell(0.0))

    def spec(self):
        d = {"family": self.family, "nodes": int(self.nodes.size), "t_max": self.domain_end}
        if self.source:
            d["file"] = self.source
        if self.truncated_at is not None:
            d["truncated_at"] = self.truncated_at
        return d


FAMILIES = {
    "euclidean": Euclidean,
    "hyperbolic": Hyperbolic,
    "spherical": Spherical,
    "spliced_exp_power": SplicedExpPower,
}


def make_family(spec: Mapping[str, Any] | str, **params) -> WarpingFunction:
    """Build a warping function from ``{"family": name, **params}`` or a name.

    >>> make_family("hyperbolic", k=2.0).spec()
    {'family': 'hyperbolic', 'k': 2.0}
    """
    if isinstance(spec, str):
        spec = {"family": spec, **params}
    spec = dict(spec)
    name = str(spec.pop("family")).replace("-", "_")
    if name == "tabulated":
        if "file" not in spec:
            raise WarpingError("tabulated family needs a file")
        return Tabulated.from_csv(spec["file"])
    if name not in FAMILIES:
        raise WarpingError(f"unknown family {name!r}")
    cls = FAMILIES[name]
    allowed = {"euclidean": set(), "hyperbolic": {"k"}, "spherical": {"k"},
               "spliced_exp_power": {"a", "p", "t0"}}[name]
    unknown = set(spec) - allowed
    if unknown:
        raise WarpingError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
    return cls(**{k: float(v) for k, v in spec.items()})


def eval_warp(w: WarpingFunction, t, order: int = 0):
    return w.eval(t, order)


@dataclass(frozen=True)
class ModelManifold:
    """[0, inf) x S^{m-1} with metric dt^2 + sigma(t)^2 dtheta^2."""

    m: int
    warp: WarpingFunction

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise WarpingError(f"dimension m must be an integer >= 2, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def omega(self) -> float:
        return unit_sphere_area(self.m)

    def spec(self) -> dict:
        return {"m": self.m, **self.warp.spec()}


def ball_volume(mm: ModelManifold, r: float, cfg: QuadratureConfig | None = None) -> float:
    """vol B_r(o) = omega_{m-1} int_0^r sigma^{m-1}."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    mm.warp.check_domain(r)
    k = mm.m - 1
    w = mm.warp
    cfg = cfg or QuadratureConfig(abs_tol=1e-13, rel_tol=1e-12)
    val, _ = integrate_finite(lambda t: w.eval(t, 0) ** k, 0.0, float(r), cfg)
    return mm.omega * val
