"""Box-counting dimension of one-dimensional point clouds.

Scales form the ladder delta_k = diam * 2**-k. Two rules pick the fitted
part of the ladder: "spacing" keeps scales between four times the minimal
gap of the cloud and diam/8, which suits deterministic sets; "window" keeps
scales whose counts lie between ``min_count`` and n_distinct/``headroom``,
which avoids the saturated small scales of random clouds whose nearest
values can be arbitrarily close.
"""
from dataclasses import dataclass, field
import csv
import json
import math

import numpy as np
from scipy import stats

from .errors import DegenerateFitError, EmptySetError
from .sets import approximate
from .series import sample_path

K_MIN = 3
K_MAX = 60


@dataclass
class PointCloud:
    values: np.ndarray
    times: np.ndarray = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size == 0:
            raise EmptySetError("point cloud is empty")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("point cloud holds non-finite values")
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=float).ravel()
            if self.times.shape != self.values.shape:
                raise ValueError("times and values must have equal length")

    def __len__(self):
        return self.values.size

    @property
    def diameter(self):
        return float(np.max(self.values) - np.min(self.values))

    def restrict(self, mask):
        return PointCloud(self.values[mask], None if self.times is None else self.times[mask],
                          dict(self.provenance))


def image(r, alpha, e, level, tag):
    """Values of process ``tag`` at the level-``level`` approximation of e."""
    if tag not in ("X", "Z"):
        raise ValueError(f"image needs tag X or Z, got {tag!r}")
    times = approximate(e, level)
    if times.size == 0:
        raise EmptySetError("the set approximation is empty")
    path = sample_path(r, alpha, times, tag)
    prov = {"tag": tag, "seed": r.seed, "N": r.N, "level": level}
    return PointCloud(path.values, times, prov)


def _box_indices(x, delta, diam):
    top = max(math.ceil(diam / delta) - 1, 0)
    return np.minimum(np.floor(x / delta), top)


def box_count(cloud, scales):
    """Number of occupied boxes [j delta, (j+1) delta) at each scale.

    Values are translated so the minimum sits at 0; the top box is closed so
    that a full interval of length D meets exactly ceil(D/delta) boxes.
    """
    values = cloud.values if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    scales = np.asarray(scales, dtype=float)
    if np.any(scales <= 0.0):
        raise ValueError("scales must be positive")
    x = np.sort(values)
    x = x - x[0]
    diam = float(x[-1])
    out = np.empty(scales.size, dtype=np.int64)
    for j, d in enumerate(scales):
        idx = _box_indices(x, d, diam)
        out[j] = 1 + np.count_nonzero(np.diff(idx))
    return out


def scale_ladder(cloud, k_min=K_MIN, k_max=K_MAX):
    """Scales diam * 2**-k from k_min until counts saturate, with counts."""
    diam = cloud.diameter
    if diam == 0.0:
        return np.array([]), np.array([], dtype=np.int64)
    n_distinct = np.unique(cloud.values).size
    scales, counts = [], []
    for k in range(k_min, k_max + 1):
        d = diam * 2.0 ** -k
        c = int(box_count(cloud, [d])[0])
        scales.append(d)
        counts.append(c)
        if c >= n_distinct:
            break
    return np.array(scales), np.array(counts, dtype=np.int64)


def default_fit_range(cloud, scales, counts, rule="spacing", min_count=16, headroom=8):
    """Inclusive index range (first, last) of the ladder to fit, or None."""
    scales = np.asarray(scales)
    counts = np.asarray(counts)
    if rule == "spacing":
        x = np.unique(cloud.values)
        gap = float(np.min(np.diff(x))) if x.size > 1 else 0.0
        keep = (scales >= 4.0 * gap) & (scales <= cloud.diameter / 8.0)
    elif rule == "window":
        n_distinct = np.unique(cloud.values).size
        keep = (counts >= min_count) & (counts <= n_distinct / headroom)
    else:
        raise ValueError(f"unknown fit rule {rule!r}")
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        return None
    return (int(idx[0]), int(idx[-1]))


@dataclass
class DimEstimate:
    scales: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    r2: float
    stderr: float
    fit_range: tuple

    def to_dict(self):
        return {
            "scales": [float(s) for s in self.scales],
            "counts": [int(c) for c in self.counts],
            "slope": self.slope, "intercept": self.intercept,
            "r2": self.r2, "stderr": self.stderr,
            "fit_range": list(self.fit_range),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["log_inv_delta", "log_count"])
            for s, c in zip(self.scales, self.counts):
                w.writerow([repr(float(-math.log(s))), repr(float(math.log(c)))])


def fit_dim(scales, counts, fit_range=None):
    """OLS slope of log N(delta) against log(1/delta) over ``fit_range``."""
    scales = np.asarray(scales, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if fit_range is None:
        fit_range = (0, scales.size - 1)
    i0, i1 = fit_range
    xs = -np.log(scales[i0:i1 + 1])
    ys = np.log(counts[i0:i1 + 1])
    if xs.size < 4:
        raise DegenerateFitError(f"need at least 4 scales in the fit range, got {xs.size}")
    if np.any(counts[i0:i1 + 1] < 1):
        raise ValueError("counts must be >= 1")
    if np.all(ys == ys[0]):
        raise DegenerateFitError("all counts are equal; the slope is undefined")
    res = stats.linregress(xs, ys)
    return DimEstimate(scales, counts.astype(np.int64), float(res.slope), float(res.intercept),
                       float(res.rvalue ** 2), float(res.stderr), (int(i0), int(i1)))


def estimate_dim(cloud, rule="spacing", min_count=16, headroom=8):
    """Ladder, fit range and slope in one call."""
    scales, counts = scale_ladder(cloud)
    rng = default_fit_range(cloud, scales, counts, rule, min_count, headroom) if scales.size else None
    if rng is None:
        raise DegenerateFitError("no scales fall inside the fit range")
    return fit_dim(scales, counts, rng)


def localized_dim(cloud, cells, min_points=64, **kw):
    """Largest box dimension among the pieces of the cloud whose times fall
    in each of ``cells`` uniform cells of [0, 1].

    Dimension is countably stable, so the image of E is as large as its
    largest piece; cells where the index function barely moves give cleaner
    scaling than the whole image. Returns (value, per-cell slopes) with NaN
    for cells that are too sparse or degenerate.
    """
    if cloud.times is None:
        raise ValueError("localized estimation needs the sample times")
    if cells == 1:
        est = estimate_dim(cloud, **kw)
        return est.slope, [est.slope]
    which = np.minimum((cloud.times * cells).astype(np.int64), cells - 1)
    slopes = []
    for i in range(cells):
        mask = which == i
        if np.count_nonzero(mask) < min_points:
            slopes.append(float("nan"))
            continue
        try:
            slopes.append(estimate_dim(cloud.restrict(mask), **kw).slope)
        except DegenerateFitError:
            slopes.append(float("nan"))
    finite = [s for s in slopes if not math.isnan(s)]
    if not finite:
        raise DegenerateFitError("no cell supports a fit")
    return max(finite), slopes
