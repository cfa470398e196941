"""Truncated LePage series for stable, multistable and subordinator paths.

A realisation is the triple (Gamma_i, V_i, gamma_i) of Poisson arrival
times, uniform jump locations and Rademacher signs. Every process is a
functional of one realisation, so X, Y and Z evaluated on the same
realisation are directly comparable.
"""
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
import csv
import math
import os
import struct

import numpy as np

from .errors import CapacityError, DomainError
from .quadrature import adaptive_panels
from .stable_core import AlphaSpec, c_alpha, h_prime, log_c_alpha

MAX_TERMS = 10 ** 8
STREAMS = ("arrivals", "locations", "signs")
TAGS = ("L", "X", "Z", "Y", "D")

# Taylor re-centring for exp(-x b): nodes are spaced so |x (b - b_node)| <= RHO
_RHO = 0.5
_TAYLOR_TERMS = 16


@dataclass(frozen=True, eq=False)
class SeriesRealization:
    seed: int
    N: int
    gamma_arrivals: np.ndarray
    jump_locations: np.ndarray
    signs: np.ndarray

    @cached_property
    def log_gamma(self):
        out = np.log(self.gamma_arrivals)
        out.setflags(write=False)
        return out

    def negated(self):
        """Same realisation with every sign flipped."""
        return SeriesRealization(self.seed, self.N, self.gamma_arrivals,
                                 self.jump_locations, _frozen(-self.signs))


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def stream_generators(seed):
    """Independent Philox generators for arrivals, locations and signs."""
    if int(seed) != seed or seed < 0 or seed >= 2 ** 64:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.Philox(c)) for name, c in zip(STREAMS, children)}


def generate(seed, N):
    """Draw a realisation with N terms."""
    N = int(N)
    if N < 1:
        raise ValueError("N must be >= 1")
    if N > MAX_TERMS:
        raise CapacityError(f"N = {N} exceeds the guard of {MAX_TERMS}")
    gens = stream_generators(seed)
    gam = np.cumsum(gens["arrivals"].standard_exponential(N))
    loc = gens["locations"].random(N)
    raw = gens["signs"].bit_generator.random_raw((N + 63) // 64).astype("<u8")
    bits = np.unpackbits(raw.view(np.uint8), bitorder="little")[:N]
    sgn = 2.0 * bits - 1.0
    return SeriesRealization(int(seed), N, _frozen(gam), _frozen(loc), _frozen(sgn))


# -- normalising constants -------------------------------------------------

@lru_cache(maxsize=32)
def _log_c_table(lo, hi):
    """Piecewise-linear table of log C_a on [lo, hi], refined until the
    midpoint interpolation error is below 1e-10."""
    n = 4097
    while True:
        grid = np.linspace(lo, hi, n)
        vals = log_c_alpha(grid)
        mids = 0.5 * (grid[1:] + grid[:-1])
        err = np.max(np.abs(log_c_alpha(mids) - 0.5 * (vals[1:] + vals[:-1])))
        if err < 1e-10 or n > 2 ** 22:
            return grid, vals
        n = 2 * n - 1


def log_c_of(alpha, a):
    """log C at index values ``a`` that all lie in the range of ``alpha``."""
    lo, hi = alpha.lower_bound, alpha.upper_bound
    if hi - lo < 1e-12:
        return np.full(np.shape(a), log_c_alpha(lo))
    grid, vals = _log_c_table(lo, hi)
    # uniform grid: locate cells by arithmetic instead of a binary search
    pos = (np.asarray(a, dtype=float) - lo) * ((grid.size - 1) / (hi - lo))
    idx = np.clip(pos.astype(np.int64), 0, grid.size - 2)
    frac = pos - idx
    return vals[idx] + frac * (vals[idx + 1] - vals[idx])


def _as_alpha(alpha):
    return alpha if isinstance(alpha, AlphaSpec) else AlphaSpec.constant(float(alpha))


def _constant_value(alpha, what):
    if isinstance(alpha, AlphaSpec):
        if not alpha.is_constant:
            raise DomainError(f"{what} needs a constant index")
        return alpha.params[0]
    a = float(alpha)
    if not 0.0 < a < 2.0:
        raise DomainError(f"alpha must lie in (0, 2), got {a}")
    return a


def _stable_terms(r, a):
    """gamma_i C_a Gamma_i^(-1/a) for one index value shared by all terms."""
    return r.signs * np.exp(log_c_alpha(a) - r.log_gamma / a)


def _z_terms(r, alpha):
    if alpha.is_constant:
        return _stable_terms(r, alpha.params[0])
    a = alpha.eval(r.jump_locations)
    return r.signs * np.exp(log_c_of(alpha, a) - r.log_gamma / a)


def masked_sum(terms, mask):
    """sum of terms[mask]; multiplying by the mask avoids a slow gather."""
    return float(np.sum(terms * mask))


def _check_time(t):
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"time must lie in [0, 1], got {t}")
    return t


# -- single-time evaluators ------------------------------------------------

def eval_levy_stable(r, alpha, t):
    """Truncated series for the symmetric alpha-stable Levy motion at t."""
    a = _constant_value(alpha, "eval_levy_stable")
    t = _check_time(t)
    return masked_sum(_stable_terms(r, a), r.jump_locations <= t)


def eval_X(r, alpha, t):
    """Field-based multistable motion: every term uses alpha(t)."""
    alpha = _as_alpha(alpha)
    t = _check_time(t)
    a = alpha.params[0] if alpha.is_constant else float(alpha.eval(t))
    return masked_sum(_stable_terms(r, a), r.jump_locations <= t)


def eval_Z(r, alpha, t):
    """Measure-based multistable motion: term i uses alpha(V_i)."""
    alpha = _as_alpha(alpha)
    t = _check_time(t)
    return masked_sum(_z_terms(r, alpha), r.jump_locations <= t)


def eval_subordinator(r, alpha, t):
    """Positive series sum_i Gamma_i^(-1/alpha) 1{V_i <= t} for alpha in (0, 1)."""
    a = _constant_value(alpha, "eval_subordinator")
    if a >= 1.0:
        raise DomainError(f"the positive series diverges for alpha >= 1, got {a}")
    t = _check_time(t)
    return masked_sum(np.exp(-r.log_gamma / a), r.jump_locations <= t)


def eval_kernel(r, alpha, i, u):
    """K_i(u), the u-derivative of C_alpha(u) Gamma_i^(-1/alpha(u)); i is 1-based."""
    alpha = _as_alpha(alpha)
    if not 1 <= i <= r.N:
        raise IndexError(f"term index {i} outside 1..{r.N}")
    u = np.asarray(u, dtype=float)
    if alpha.is_constant:
        out = np.zeros(u.shape)
    else:
        out = _kernel_sum(alpha, u, r.log_gamma[i - 1:i], np.ones(1))
    return float(out) if out.ndim == 0 else out


def _kernel_sum(alpha, u, x, w):
    """sum_k w_k K(u; x_k) for small term sets, evaluated directly."""
    a = alpha.eval(u)
    da = alpha.deriv(u)
    a_ = np.asarray(a)[..., None]
    g = np.exp(-x / a_)
    lead = np.sum(w * g, axis=-1)
    logs = np.sum(w * x * g, axis=-1)
    return da * (h_prime(a) * lead + c_alpha(a) / (a * a) * logs)


# -- batched path evaluation -----------------------------------------------

def _slots(times, v, side):
    """Slot j such that term i contributes to every time index >= j."""
    return np.searchsorted(times, v, side=side)


def _cumulative(slot, weights, n_out):
    return np.cumsum(np.bincount(slot, weights=weights, minlength=n_out + 1)[:n_out])


def _exp_sums(x, w, slot, b):
    """S_j = sum_{i: slot_i <= j} w_i exp(-x_i b_j) for every j.

    Groups the b_j around nodes b_m and expands exp(-x (b_m + d)) as a
    Taylor series in x d, so each node costs a fixed number of bincount
    passes instead of one pass per time.
    """
    b = np.asarray(b, dtype=float)
    n_out = b.size
    out = np.zeros(n_out)
    if n_out == 0 or x.size == 0:
        return out
    xmax = float(np.max(np.abs(x)))
    if xmax == 0.0:
        return _cumulative(slot, w, n_out)
    step = 2.0 * _RHO / xmax
    b0 = float(np.min(b))
    node = np.rint((b - b0) / step).astype(np.int64)
    for m in np.unique(node):
        sel = np.flatnonzero(node == m)
        bm = b0 + m * step
        d = b[sel] - bm
        term = w * np.exp(-x * bm)
        acc = np.zeros(sel.size)
        dpow = np.ones(sel.size)
        for k in range(_TAYLOR_TERMS):
            acc += _cumulative(slot, term, n_out)[sel] * dpow
            term = term * (-x) / (k + 1)
            dpow = dpow * d
        out[sel] = acc
    return out


def _check_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise ValueError("times must be one-dimensional")
    if times.size and (times[0] < 0.0 or times[-1] > 1.0 or np.any(np.diff(times) < 0.0)):
        raise DomainError("times must be sorted inside [0, 1]")
    return times


def _jump_path(r, jumps, times):
    slot = _slots(times, r.jump_locations, "left")
    return _cumulative(slot, jumps, times.size)


def _x_path(r, alpha, times):
    if alpha.is_constant:
        return _jump_path(r, _stable_terms(r, alpha.params[0]), times)
    a = alpha.eval(times)
    slot = _slots(times, r.jump_locations, "left")
    return np.exp(log_c_alpha(a)) * _exp_sums(r.log_gamma, r.signs, slot, 1.0 / a)


def _y_integrand(r, alpha):
    x, sg, v = r.log_gamma, r.signs, r.jump_locations
    sx = sg * x

    def f(u):
        shape = u.shape
        flat = u.ravel()
        order = np.argsort(flat, kind="stable")
        us = flat[order]
        a = alpha.eval(us)
        slot = _slots(us, v, "right")   # V_i < u
        lead = _exp_sums(x, sg, slot, 1.0 / a)
        logs = _exp_sums(x, sx, slot, 1.0 / a)
        vals = alpha.deriv(us) * (h_prime(a) * lead + c_alpha(a) / (a * a) * logs)
        out = np.empty_like(flat)
        out[order] = vals
        return out.reshape(shape)

    return f


def _y_path(r, alpha, times, quad_tol):
    if alpha.is_constant or times.size == 0:
        return np.zeros(times.size)
    tmax = float(times[-1])
    jumps = r.jump_locations[r.jump_locations < tmax]
    cuts = np.unique(np.concatenate([[0.0], jumps, times]))
    if cuts.size < 2:
        return np.zeros(times.size)
    pieces = adaptive_panels(_y_integrand(r, alpha), cuts[:-1], cuts[1:], quad_tol, n=10)
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    return cum[np.searchsorted(cuts, times)]


def eval_Y(r, alpha, t, quad_tol=1e-6):
    """Y(t) = int_0^t sum_i gamma_i K_i(u) 1{V_i < u} du, by quadrature split at the V_i."""
    alpha = _as_alpha(alpha)
    t = _check_time(t)
    return float(_y_path(r, alpha, np.array([t]), quad_tol)[0])


@dataclass
class PathSample:
    tag: str
    times: np.ndarray
    values: np.ndarray
    N: int
    seed: int

    MAGIC = b"MSLVPATH"
    _HEADER = struct.Struct("<8s1s7xQQQ")

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown process tag {self.tag!r}")
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have equal length")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            for t, val in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(val))])

    @classmethod
    def from_csv(cls, path, tag, N, seed):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(tag, data[:, 0], data[:, 1], N, seed)

    def to_bytes(self):
        head = self._HEADER.pack(self.MAGIC, self.tag.encode("ascii"), self.seed, self.N, self.times.size)
        return head + self.times.astype("<f8").tobytes() + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob):
        magic, tag, seed, N, count = cls._HEADER.unpack_from(blob)
        if magic != cls.MAGIC:
            raise ValueError("not a path cache file")
        body = np.frombuffer(blob, dtype="<f8", offset=cls._HEADER.size)
        if body.size != 2 * count:
            raise ValueError(f"cache body holds {body.size} floats, expected {2 * count}")
        return cls(tag.decode("ascii"), body[:count].copy(), body[count:].copy(), N, seed)

    def write_binary(self, path):
        tmp = f"{path}.tmp{os.getpid()}"
        with open(tmp, "wb") as fh:
            fh.write(self.to_bytes())
        os.replace(tmp, path)

    @classmethod
    def read_binary(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def sample_path(r, alpha, times, tag, quad_tol=1e-6):
    """Evaluate process ``tag`` at every entry of the sorted ``times``."""
    times = _check_times(times)
    if tag == "L":
        values = _jump_path(r, _stable_terms(r, _constant_value(alpha, "tag L")), times)
    elif tag == "D":
        a = _constant_value(alpha, "tag D")
        if a >= 1.0:
            raise DomainError(f"the positive series diverges for alpha >= 1, got {a}")
        values = _jump_path(r, np.exp(-r.log_gamma / a), times)
    elif tag == "Z":
        values = _jump_path(r, _z_terms(r, _as_alpha(alpha)), times)
    elif tag == "X":
        values = _x_path(r, _as_alpha(alpha), times)
    elif tag == "Y":
        values = _y_path(r, _as_alpha(alpha), times, quad_tol)
    else:
        raise ValueError(f"unknown process tag {tag!r}")
    return PathSample(tag, times, values, r.N, r.seed)


# -- truncation control ----------------------------------------------------

def tail_std_bound(alpha, N):
    """Upper bound on the standard deviation of the terms dropped after N.

    Uses Gamma(i - c)/Gamma(i) <= (i - c)^(-c) exp(c / (i - c)) with
    c = 2/a, which follows from digamma(x) > log(x) - 1/x, and bounds the
    remaining sum by an integral.
    """
    alpha = _as_alpha(alpha)
    lo, hi = alpha.lower_bound, alpha.upper_bound
    c_max, c_min = 2.0 / lo, 2.0 / hi
    if not N > c_max + 1.0:
        raise DomainError(f"need N > 2/alpha_* + 1 = {c_max + 1.0:.4g}, got {N}")
    grid = np.linspace(lo, hi, 257) if hi > lo else np.array([lo])
    c2 = float(np.max(np.exp(2.0 * log_c_alpha(grid))))
    growth = math.exp(c_max / (N + 1.0 - c_max))
    tail = (N - c_min) ** (1.0 - c_min) / (c_min - 1.0)
    return math.sqrt(c2 * growth * tail)


@dataclass(frozen=True)
class TruncationPolicy:
    """Either a fixed term count or a target tail standard deviation."""

    mode: str = "fixed"
    value: float = 100000

    def __post_init__(self):
        if self.mode == "fixed":
            if int(self.value) != self.value or self.value < 1:
                raise ValueError("fixed truncation needs an integer N >= 1")
        elif self.mode == "tail":
            if not self.value > 0.0:
                raise ValueError("tail target must be positive")
        else:
            raise ValueError(f"unknown truncation mode {self.mode!r}")

    def terms(self, alpha):
        if self.mode == "fixed":
            return int(self.value)
        alpha = _as_alpha(alpha)
        lo = int(math.floor(2.0 / alpha.lower_bound + 1.0)) + 1
        hi = lo
        while tail_std_bound(alpha, hi) > self.value:
            hi *= 2
            if hi > MAX_TERMS:
                raise CapacityError(f"tail target {self.value} needs more than {MAX_TERMS} terms")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if tail_std_bound(alpha, mid) > self.value:
                lo = mid
            else:
                hi = mid
        return hi if tail_std_bound(alpha, lo) > self.value else lo
