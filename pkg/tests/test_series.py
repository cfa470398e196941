import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from mslevy.errors import CapacityError, DomainError
from mslevy.series import (MAX_TERMS, PathSample, TruncationPolicy, _exp_sums, eval_kernel,
                           eval_levy_stable, eval_subordinator, eval_X, eval_Y, eval_Z, generate,
                           log_c_of, sample_path, tail_std_bound)
from mslevy.stable_core import AlphaSpec, c_alpha, log_c_alpha

AFFINE = AlphaSpec.affine(0.8, 0.6)
GRID = np.linspace(0.0, 1.0, 101)


@pytest.fixture(scope="module")
def big():
    return generate(7, 100000)


@pytest.fixture(scope="module")
def small():
    return generate(11, 10000)


# -- generation ---------------------------------------------------------------

def test_generation_invariants(big):
    assert big.N == 100000
    assert big.gamma_arrivals[0] > 0.0 and np.all(np.diff(big.gamma_arrivals) > 0.0)
    assert np.all((big.jump_locations >= 0.0) & (big.jump_locations <= 1.0))
    assert set(np.unique(big.signs)) == {-1.0, 1.0}
    assert not big.signs.flags.writeable


def test_generation_statistics(big):
    gaps = np.diff(np.concatenate([[0.0], big.gamma_arrivals]))
    assert stats.kstest(gaps, "expon").pvalue > 1e-3
    assert stats.kstest(big.jump_locations, "uniform").pvalue > 1e-3
    # Rademacher mean has standard deviation 1/sqrt(N)
    assert abs(big.signs.mean()) < 4.0 / math.sqrt(big.N)
    # signs independent of locations: no correlation beyond noise
    assert abs(np.corrcoef(big.signs, big.jump_locations)[0, 1]) < 4.0 / math.sqrt(big.N)


def test_generation_deterministic_and_prefix_free():
    a, b = generate(3, 5000), generate(3, 5000)
    for f in ("gamma_arrivals", "jump_locations", "signs"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert not np.array_equal(generate(4, 5000).jump_locations, a.jump_locations)


def test_generation_guards():
    with pytest.raises(ValueError):
        generate(0, 0)
    with pytest.raises(CapacityError):
        generate(0, MAX_TERMS + 1)
    with pytest.raises(ValueError):
        generate(-1, 10)


# -- single-time evaluators ----------------------------------------------------

def test_single_term_stable():
    r = generate(5, 1)
    t = 1.0
    want = r.signs[0] * c_alpha(1.3) * r.gamma_arrivals[0] ** (-1 / 1.3) * (r.jump_locations[0] <= t)
    assert eval_levy_stable(r, 1.3, t) == pytest.approx(want, rel=1e-14)


def test_constant_alpha_collapse_exact(small):
    c = AlphaSpec.constant(1.5)
    for t in (0.0, 0.3, 0.77, 1.0):
        l = eval_levy_stable(small, 1.5, t)
        assert eval_X(small, c, t) == l
        assert eval_Z(small, c, t) == l
    assert np.array_equal(sample_path(small, c, GRID, "X").values, sample_path(small, c, GRID, "Z").values)
    assert np.array_equal(sample_path(small, c, GRID, "L").values, sample_path(small, c, GRID, "Z").values)


def test_time_zero_gives_zero(small):
    for tag, a in (("L", 1.2), ("X", AFFINE), ("Z", AFFINE), ("D", 0.6), ("Y", AFFINE)):
        assert sample_path(small, a, [0.0], tag).values.tolist() == [0.0]


def test_path_matches_pointwise(small):
    times = np.linspace(0.0, 1.0, 17)
    x = sample_path(small, AFFINE, times, "X").values
    z = sample_path(small, AFFINE, times, "Z").values
    for t, xv, zv in zip(times, x, z):
        assert xv == pytest.approx(eval_X(small, AFFINE, t), abs=1e-10)
        assert zv == pytest.approx(eval_Z(small, AFFINE, t), abs=1e-10)


def test_z_path_is_cumulative_sum_in_v_order(small):
    order = np.argsort(small.jump_locations)
    a = AFFINE.eval(small.jump_locations)
    terms = small.signs * c_alpha(a) * small.gamma_arrivals ** (-1.0 / a)
    times = small.jump_locations[order][::500]
    want = np.array([terms[order][:k + 1].sum() for k in range(0, small.N, 500)])
    got = sample_path(small, AFFINE, times, "Z").values
    assert np.allclose(got, want, atol=1e-8)


def test_z_constant_between_jumps(small):
    v = np.sort(small.jump_locations)
    lo, hi = v[100], v[101]
    times = np.linspace(lo, hi, 7)[1:-1]
    vals = sample_path(small, AFFINE, times, "Z").values
    assert np.all(vals == vals[0])


def test_sign_flip_symmetry(small):
    neg = small.negated()
    for tag, a in (("L", 1.2), ("X", AFFINE), ("Z", AFFINE)):
        assert np.allclose(sample_path(neg, a, GRID, tag).values, -sample_path(small, a, GRID, tag).values,
                           atol=1e-12)
    assert np.array_equal(sample_path(neg, 0.6, GRID, "D").values, sample_path(small, 0.6, GRID, "D").values)


def test_exp_sums_matches_direct():
    rng = np.random.default_rng(0)
    x = np.log(np.cumsum(rng.exponential(size=3000)))
    w = rng.choice([-1.0, 1.0], size=3000)
    b = np.sort(rng.uniform(0.5, 2.5, size=40))
    slot = rng.integers(0, 41, size=3000)
    got = _exp_sums(x, w, slot, b)
    want = np.array([np.sum(w[slot <= j] * np.exp(-x[slot <= j] * b[j])) for j in range(b.size)])
    assert np.allclose(got, want, rtol=1e-11, atol=1e-11)


def test_log_c_table_accuracy():
    alpha = AlphaSpec.affine(0.5, 1.0)
    a = np.linspace(0.5, 1.5, 10007)
    assert np.max(np.abs(log_c_of(alpha, a) - log_c_alpha(a))) < 1e-10


# -- kernel and Y --------------------------------------------------------------------

def test_kernel_zero_for_constant(small):
    assert eval_kernel(small, AlphaSpec.constant(1.1), 5, 0.3) == 0.0
    with pytest.raises(IndexError):
        eval_kernel(small, AFFINE, 0, 0.3)


@pytest.mark.parametrize("i", [1, 10, 1000])
@pytest.mark.parametrize("u", [0.1, 0.5, 0.9])
def test_kernel_matches_finite_difference(small, i, u):
    g = small.gamma_arrivals[i - 1]
    d = 1e-6

    def f(s):
        a = AFFINE.eval(s)
        return c_alpha(a) * g ** (-1.0 / a)

    fd = (f(u + d) - f(u - d)) / (2 * d)
    assert eval_kernel(small, AFFINE, i, u) == pytest.approx(fd, rel=1e-4)


def test_kernel_bound_shape(small):
    # |K_i(u)| / ((1 + |log G_i|)(G_i^(-1/a_*) + G_i^(-1/a^*))) stays bounded in i
    u = np.linspace(0.0, 1.0, 21)
    g = small.gamma_arrivals
    ratios = []
    for i in range(1, small.N + 1, 97):
        k = np.abs(eval_kernel(small, AFFINE, i, u))
        env = (1 + abs(math.log(g[i - 1]))) * (g[i - 1] ** (-1 / 0.8) + g[i - 1] ** (-1 / 1.4))
        ratios.append(k.max() / env)
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios))
    fitted = ratios[:10].max()
    assert ratios.max() <= 2.0 * fitted


def test_y_zero_cases(small):
    assert eval_Y(small, AlphaSpec.constant(1.2), 0.7) == 0.0
    assert eval_Y(small, AFFINE, 0.0) == 0.0


def test_decomposition_identity(small):
    x = sample_path(small, AFFINE, GRID, "X").values
    y = sample_path(small, AFFINE, GRID, "Y").values
    z = sample_path(small, AFFINE, GRID, "Z").values
    assert np.max(np.abs(x - y - z)) < 1e-4


def test_y_residual_shrinks_with_tolerance():
    r = generate(12, 2000)
    t = np.linspace(0.0, 1.0, 11)
    base = sample_path(r, AFFINE, t, "X").values - sample_path(r, AFFINE, t, "Z").values
    loose = np.max(np.abs(base - sample_path(r, AFFINE, t, "Y", quad_tol=1e-6).values))
    tight = np.max(np.abs(base - sample_path(r, AFFINE, t, "Y", quad_tol=1e-8).values))
    assert tight <= loose + 1e-12
    assert tight < 1e-6


def test_eval_y_matches_path(small):
    y = sample_path(small, AFFINE, np.array([0.25, 0.5]), "Y").values
    assert eval_Y(small, AFFINE, 0.5) == pytest.approx(y[1], abs=1e-6)


# -- subordinator ------------------------------------------------------------------

def test_subordinator(small):
    with pytest.raises(DomainError):
        eval_subordinator(small, 1.0, 0.5)
    with pytest.raises(DomainError):
        sample_path(small, 1.2, GRID, "D")
    assert eval_subordinator(small, 0.6, 0.0) == 0.0
    path = sample_path(small, 0.6, GRID, "D").values
    assert np.all(np.diff(path) >= 0.0)
    assert path[-1] == pytest.approx(eval_subordinator(small, 0.6, 1.0), rel=1e-12)


def test_subordinator_self_similarity():
    m, n, a, c = 10000, 2000, 0.6, 0.5
    half = np.empty(m)
    whole = np.empty(m)
    for k in range(m):
        half[k] = eval_subordinator(generate(k, n), a, c)
        whole[k] = c ** (1.0 / a) * eval_subordinator(generate(m + k, n), a, 1.0)
    assert stats.ks_2samp(half, whole).pvalue > 0.01


# -- IO --------------------------------------------------------------------------

def test_path_csv_and_binary_round_trip(small, tmp_path):
    p = sample_path(small, AFFINE, GRID, "X")
    p.to_csv(tmp_path / "x.csv")
    back = PathSample.from_csv(tmp_path / "x.csv", "X", small.N, small.seed)
    assert np.array_equal(back.values, p.values) and np.array_equal(back.times, p.times)
    p.write_binary(tmp_path / "x.bin")
    back = PathSample.read_binary(tmp_path / "x.bin")
    assert (back.tag, back.N, back.seed) == ("X", small.N, small.seed)
    assert np.array_equal(back.values, p.values)
    raw = (tmp_path / "x.bin").read_bytes()
    assert raw[:8] == b"MSLVPATH"
    with pytest.raises(ValueError):
        PathSample.from_bytes(b"NOTAPATH" + raw[8:])


def test_times_validation(small):
    with pytest.raises(DomainError):
        sample_path(small, AFFINE, [0.5, 0.2], "Z")
    with pytest.raises(DomainError):
        sample_path(small, AFFINE, [0.5, 1.2], "Z")
    with pytest.raises(DomainError):
        eval_X(small, AFFINE, -0.1)


# -- truncation ---------------------------------------------------------------------

def _tail_oracle(a, N, top=10 ** 7):
    """Direct summation of C_a^2 Gamma(i - 2/a)/Gamma(i) for N < i <= top."""
    i = np.arange(N + 1, top + 1, dtype=float)
    terms = np.exp(special.gammaln(i - 2.0 / a) - special.gammaln(i))
    return math.sqrt(c_alpha(a) ** 2 * terms.sum())


@pytest.mark.parametrize("a", [0.7, 1.2, 1.9])
def test_tail_bound_dominates_direct_sum(a):
    bound = tail_std_bound(AlphaSpec.constant(a), 10 ** 4)
    oracle = _tail_oracle(a, 10 ** 4)
    assert bound >= oracle
    if a < 1.5:
        # for fast-decaying tails the bound is tight
        assert bound <= 1.05 * oracle
    assert math.isfinite(bound)


def test_tail_bound_values():
    assert tail_std_bound(AlphaSpec.constant(0.7), 10 ** 4) < 1e-4
    assert tail_std_bound(AlphaSpec.constant(1.9), 10 ** 4) < 1.0
    with pytest.raises(DomainError):
        tail_std_bound(AlphaSpec.constant(0.5), 4)


@given(st.floats(0.3, 1.9), st.floats(0.0, 0.09), st.integers(20, 10 ** 6))
@settings(max_examples=50, deadline=None)
def test_tail_bound_decreasing_and_covers_range(lo, width, n):
    alpha = AlphaSpec.affine(lo, width)
    if n <= 2.0 / lo + 1.0:
        return
    b1, b2 = tail_std_bound(alpha, n), tail_std_bound(alpha, 2 * n)
    assert b2 < b1
    assert tail_std_bound(AlphaSpec.constant(lo), n) <= b1 * (1 + 1e-12)


def test_truncation_policy():
    assert TruncationPolicy("fixed", 500).terms(AFFINE) == 500
    light = AlphaSpec.affine(0.6, 0.3)
    n = TruncationPolicy("tail", 1e-3).terms(light)
    assert tail_std_bound(light, n) <= 1e-3 < tail_std_bound(light, n - 1)
    # alpha^* = 1.4 decays like N^-0.21, far beyond the term guard
    with pytest.raises(CapacityError):
        TruncationPolicy("tail", 1e-3).terms(AFFINE)
    with pytest.raises(ValueError):
        TruncationPolicy("fixed", 0)
    with pytest.raises(ValueError):
        TruncationPolicy("tail", -1.0)
