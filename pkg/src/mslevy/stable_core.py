"""Analytic kernels for symmetric stable and multistable laws.

The stability-index function, the normalising constant of the series
representation, and log-characteristic functions of increments of the
field-based process X and the measure-based process Z.
"""
from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln

from .errors import DomainError
from .quadrature import adaptive_panels

__all__ = [
    "AlphaSpec", "CharFnQuery", "c_alpha", "log_c_alpha", "h", "h_prime",
    "log_phi_Z_increment", "log_phi_X_increment", "log_phi_X_marginal",
]

_HALF_PI = 0.5 * math.pi


def _check_open_interval(v, name="alpha"):
    arr = np.asarray(v, dtype=float)
    if not np.all((arr > 0.0) & (arr < 2.0)):
        raise DomainError(f"{name} must lie in (0, 2), got {v!r}")
    return arr


def log_c_alpha(alpha):
    """Natural log of the series normalising constant, vectorised.

    Uses ``cos(pi a / 2) / (1 - a) = (pi / 2) * sinc((a - 1) / 2)`` so the
    removable singularity at ``a = 1`` never appears.
    """
    a = _check_open_interval(alpha)
    inner = gammaln(2.0 - a) + np.log(_HALF_PI * np.sinc(0.5 * (a - 1.0)))
    out = -inner / a
    return float(out) if out.ndim == 0 else out


def c_alpha(alpha):
    """Normalising constant C_alpha = (int_0^inf x^-alpha sin x dx)^(-1/alpha).

    Closed form ``((1 - a) / (Gamma(2 - a) cos(pi a / 2)))**(1/a)``; equals
    ``2/pi`` at ``a = 1``.
    """
    out = np.exp(log_c_alpha(alpha))
    return float(out) if np.ndim(out) == 0 else out


def h(v):
    """Same function as :func:`c_alpha`, viewed as a function of the index."""
    return c_alpha(v)


def h_prime(v, step=1e-5):
    """Derivative of :func:`h` by Richardson-extrapolated central differences."""
    v = np.asarray(v, dtype=float)
    _check_open_interval(v, "v")
    if np.any(v - step <= 0.0) or np.any(v + step >= 2.0):
        raise DomainError(f"v must stay at least {step} inside (0, 2)")

    def central(d):
        return (c_alpha(v + d) - c_alpha(v - d)) / (2.0 * d)

    out = np.asarray((4.0 * central(0.5 * step) - central(step)) / 3.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AlphaSpec:
    """A C^1 stability-index function on [0, 1] with values in (0, 2).

    ``kind`` is one of ``"constant"`` (``params=(c,)``), ``"affine"``
    (``params=(a, b)`` for ``a + b t``) or ``"cubic"`` (``params`` are values
    at equispaced knots on [0, 1], joined by a monotone-preserving cubic
    Hermite interpolant).
    """

    kind: str
    params: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind == "constant":
            if len(self.params) != 1:
                raise ValueError("constant alpha takes one parameter")
        elif self.kind == "affine":
            if len(self.params) != 2:
                raise ValueError("affine alpha takes two parameters (a, b)")
        elif self.kind == "cubic":
            if len(self.params) < 2:
                raise ValueError("cubic alpha needs at least two knot values")
        else:
            raise ValueError(f"unknown alpha kind {self.kind!r}")
        lo, hi = self.lower_bound, self.upper_bound
        if not (0.0 < lo <= hi < 2.0):
            raise DomainError(f"alpha range [{lo}, {hi}] is not inside (0, 2)")

    @classmethod
    def constant(cls, c):
        return cls("constant", (c,))

    @classmethod
    def affine(cls, a, b):
        return cls("affine", (a, b))

    @classmethod
    def cubic(cls, values):
        return cls("cubic", tuple(values))

    @property
    def is_constant(self):
        return self.kind == "constant" or (self.kind == "affine" and self.params[1] == 0.0) or (
            self.kind == "cubic" and len(set(self.params)) == 1)

    @cached_property
    def _pchip(self):
        knots = np.linspace(0.0, 1.0, len(self.params))
        return PchipInterpolator(knots, np.asarray(self.params))

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full(t.shape, self.params[0])
        elif self.kind == "affine":
            out = self.params[0] + self.params[1] * t
        else:
            out = self._pchip(t)
        return float(out) if out.ndim == 0 else out

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.zeros(t.shape)
        elif self.kind == "affine":
            out = np.full(t.shape, self.params[1])
        else:
            out = self._pchip.derivative()(t)
        return float(out) if out.ndim == 0 else out

    @property
    def lower_bound(self):
        if self.kind == "affine":
            a, b = self.params
            return min(a, a + b)
        # the Hermite interpolant never leaves the range of its knot values
        return min(self.params)

    @property
    def upper_bound(self):
        if self.kind == "affine":
            a, b = self.params
            return max(a, a + b)
        return max(self.params)

    @cached_property
    def lipschitz_bound(self):
        """sup |alpha'| over [0, 1]."""
        if self.kind == "constant":
            return 0.0
        if self.kind == "affine":
            return abs(self.params[1])
        # derivative is quadratic on each piece: check ends and vertices
        dp = self._pchip.derivative()
        c = dp.c
        x = dp.x
        cand = [abs(float(dp(x[0]))), abs(float(dp(x[-1])))]
        for j in range(c.shape[1]):
            a2, a1, a0 = c[0, j], c[1, j], c[2, j]
            width = x[j + 1] - x[j]
            cand.append(abs(a0))
            cand.append(abs(a2 * width ** 2 + a1 * width + a0))
            if a2 != 0.0:
                xv = -a1 / (2.0 * a2)
                if 0.0 < xv < width:
                    cand.append(abs(a2 * xv ** 2 + a1 * xv + a0))
        return max(cand)

    def is_monotone(self):
        """True when alpha is strictly monotone on [0, 1]."""
        if self.kind == "affine":
            return self.params[1] != 0.0
        if self.kind == "constant":
            return False
        d = np.diff(self.params)
        return bool(np.all(d > 0) or np.all(d < 0))

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "c": self.params[0]}
        if self.kind == "affine":
            return {"kind": "affine", "a": self.params[0], "b": self.params[1]}
        return {"kind": "cubic", "values": list(self.params)}


@dataclass(frozen=True)
class CharFnQuery:
    s: float
    t: float
    theta: float

    def __post_init__(self):
        if not (0.0 <= self.s <= self.t <= 1.0):
            raise DomainError(f"need 0 <= s <= t <= 1, got s={self.s}, t={self.t}")


def log_phi_X_marginal(alpha, t, theta):
    """log E exp(i theta X(t)) = -t |theta|^alpha(t)."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    if theta == 0.0:
        return 0.0
    return float(-t * abs(theta) ** alpha.eval(t))


def log_phi_Z_increment(alpha, q, tol=1e-9):
    """-int_s^t |theta|^alpha(u) du by adaptive quadrature."""
    th = abs(q.theta)
    if th == 0.0 or q.s == q.t:
        return 0.0
    if alpha.is_constant:
        return float(-(q.t - q.s) * th ** alpha.eval(q.s))
    if th == 1.0:
        return -(q.t - q.s)
    val, _ = quad(lambda u: th ** alpha.eval(u), q.s, q.t, epsabs=tol, epsrel=0.0, limit=200)
    return float(-val)


def _kernel_gap_integral(ct, bt, cs, bs, theta, tol=1e-8, cut_error=1e-10):
    """int_0^inf sin^2(theta/2 (ct y^-bt - cs y^-bs)) dy for bt != bs.

    Three regions. Near the origin the phase derivative is huge and
    monotone, so the integral of the cosine part is bounded by the first
    derivative test and sin^2 is replaced by its mean 1/2. Far out the phase
    is below 1e-6 and sin^2 is replaced by the square of its argument, which
    integrates in closed form. The middle is integrated in log y over panels
    no wider than two radians of phase.
    """
    half = 0.5 * abs(theta)
    (bmax, cmax), (bmin, cmin) = sorted([(bt, ct), (bs, cs)], reverse=True)
    db = bmax - bmin

    def phase(y):
        return half * (ct * y ** (-bt) - cs * y ** (-bs))

    def dphase_dlogy(y):
        return half * (-bt * ct * y ** (-bt) + bs * cs * y ** (-bs))

    def dphase(y):
        return half * abs(-bt * ct * y ** (-bt - 1.0) + bs * cs * y ** (-bs - 1.0))

    # |d'| is monotone on (0, y_turn); below y_lo the cosine part of sin^2
    # is bounded by 1 / (theta |d'(y_lo)|) <= cut_error
    y_turn = (bmax * cmax / (bmin * cmin)) ** (1.0 / db)
    need = 1.0 / (2.0 * cut_error)
    y_lo = min(1.0, 0.5 * y_turn)
    if dphase(y_lo) < need:
        hi_y = y_lo
        while dphase(y_lo) < need:
            hi_y, y_lo = y_lo, y_lo / 10.0
        for _ in range(60):
            mid = math.sqrt(y_lo * hi_y)
            if dphase(mid) >= need:
                y_lo = mid
            else:
                hi_y = mid

    # far cut: |phase| <= 1e-6 for every larger y
    y_hi = max(1.0, 2.0 * y_turn)
    while half * (ct * y_hi ** (-bt) + cs * y_hi ** (-bs)) > 1e-6:
        y_hi *= 2.0

    tail = 0.25 * theta * theta * (
        ct * ct * y_hi ** (1.0 - 2.0 * bt) / (2.0 * bt - 1.0)
        - 2.0 * ct * cs * y_hi ** (1.0 - bt - bs) / (bt + bs - 1.0)
        + cs * cs * y_hi ** (1.0 - 2.0 * bs) / (2.0 * bs - 1.0))

    w_lo, w_hi = math.log(y_lo), math.log(y_hi)
    base = np.linspace(w_lo, w_hi, max(8, int(math.ceil((w_hi - w_lo) / 0.25))) + 1)
    probe = np.exp(np.stack([base[:-1], 0.5 * (base[:-1] + base[1:]), base[1:]]))
    rate = np.max(np.abs(dphase_dlogy(probe)), axis=0)
    pieces = np.maximum(1, np.ceil(rate * np.diff(base))).astype(int)
    if pieces.sum() > 5_000_000:
        raise DomainError("phase oscillates too fast near the origin; alpha too small")
    edges = np.concatenate([np.linspace(base[j], base[j + 1], pieces[j] + 1)[:-1]
                            for j in range(len(pieces))] + [[w_hi]])

    def integrand(w):
        y = np.exp(w)
        return np.sin(phase(y)) ** 2 * y

    middle = adaptive_panels(integrand, edges[:-1], edges[1:], tol).sum()
    return 0.5 * y_lo + middle + tail


def log_phi_X_increment(alpha, q, tol=1e-8):
    """log E exp(i theta (X(t) - X(s))) for s <= t.

    The jump locations below s contribute through the difference of the two
    series kernels; those in (s, t] contribute a plain stable term.
    """
    th = abs(q.theta)
    if th == 0.0 or q.s == q.t:
        return 0.0
    a_t = alpha.eval(q.t)
    fresh = -(q.t - q.s) * th ** a_t
    if q.s == 0.0:
        return fresh
    a_s = alpha.eval(q.s)
    if a_s == a_t:
        return fresh
    gap = _kernel_gap_integral(c_alpha(a_t), 1.0 / a_t, c_alpha(a_s), 1.0 / a_s, th, tol=tol)
    return float(-2.0 * q.s * gap + fresh)
