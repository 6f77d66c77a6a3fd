"""Row laws, dilution graphs, seed policy."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

import diluteu as d
from conftest import rng_of


def test_rademacher_spec(rad):
    assert rad.mean == 0.0
    assert rad.variance == 1.0
    assert rad.sign_mean == 0.0
    assert rad.nonzero_prob == 1.0
    assert rad.is_discrete
    assert set(rad.support) == {-1.0, 1.0}


def test_rademacher_row_statistics(rad):
    n = 40000
    x = d.sample_row(n, rad, 11)
    assert set(np.unique(x)) == {-1.0, 1.0}
    # mean of n signs has sd 1/sqrt(n); allow 4 sigma
    assert abs(x.mean()) < 4.0 / math.sqrt(n)


def test_sample_row_deterministic(norm):
    a = d.sample_row(64, norm, 123)
    b = d.sample_row(64, norm, 123)
    c = d.sample_row(64, norm, 124)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_uniform_moments_and_samples():
    u = d.uniform(-2.0, 2.0)
    assert u.variance == pytest.approx(16.0 / 12.0)
    assert u.abs_bound == 2.0
    x = d.sample_row(10000, u, 7)
    assert x.min() >= -2.0 and x.max() <= 2.0
    assert abs(x.mean()) < 4 * math.sqrt(u.variance / 10000)


def test_uniform_autocenters_with_warning():
    with pytest.warns(UserWarning, match="auto-centering"):
        u = d.uniform(0.0, 2.0)
    assert u.params == (-1.0, 1.0)


def test_uniform_rejects_empty_interval():
    with pytest.raises(d.ConfigurationError):
        d.uniform(1.0, 1.0)


def test_table_law_exact_moments(skewed):
    # P(-1) = 5/6, P(5) = 1/6: mean 0, variance 5, sign mean -2/3
    assert abs(skewed.mean) < 1e-15
    assert skewed.variance == pytest.approx(5.0, abs=1e-12)
    assert skewed.sign_mean == pytest.approx(-2.0 / 3.0, abs=1e-12)
    assert skewed.nonzero_prob == 1.0
    assert skewed.abs_bound == 5.0


def test_table_autocenter_warning_and_shift():
    with pytest.warns(UserWarning, match="auto-centering"):
        t = d.table([1, 3], [0.5, 0.5])
    assert t.support == (-1.0, 1.0)
    assert t.mean == 0.0


def test_table_point_mass_without_centering():
    t = d.table([1.0], [1.0], auto_center=False)
    assert t.support == (1.0,)
    x = d.sample_row(32, t, 0)
    assert np.all(x == 1.0)


def test_table_merges_duplicates():
    t = d.table([1.0, -1.0, 1.0], [0.25, 0.5, 0.25])
    assert t.support == (-1.0, 1.0)
    assert t.probs == (0.5, 0.5)


def test_table_validation_errors():
    with pytest.raises(d.ConfigurationError):
        d.table([1.0], [0.5])  # does not sum to 1
    with pytest.raises(d.ConfigurationError):
        d.table([1.0, -1.0], [1.5, -0.5])
    with pytest.raises(d.ConfigurationError):
        d.table([], [])


def test_table_from_file(tmp_path):
    f = tmp_path / "law.txt"
    f.write_text("# two-point law\n-1 0.833333333333333333\n5 0.166666666666666667\n")
    t = d.table_from_file(f)
    assert t.support == pytest.approx((-1.0, 5.0))
    with pytest.raises(d.ConfigurationError):
        f2 = tmp_path / "bad.txt"
        f2.write_text("1 2 3\n")
        d.table_from_file(f2)


def test_sample_row_rejects_bad_n(rad):
    with pytest.raises(d.ConfigurationError):
        d.sample_row(0, rad, 1)


# ---------------------------------------------------------------- dilution


def test_dilution_determinism_and_symmetry():
    g = d.sample_dilution(12, 0.4, 99)
    h = d.sample_dilution(12, 0.4, 99)
    assert np.array_equal(g.dense(), h.dense())
    m = g.dense()
    assert np.array_equal(m, m.T)
    assert np.all(np.diag(m) == 0)
    for i in range(g.n):
        for j in range(g.n):
            if i != j:
                assert g.bit(i, j) == g.bit(j, i) == m[i, j]


def test_dilution_no_diagonal_access():
    g = d.sample_dilution(5, 0.5, 1)
    with pytest.raises(d.ConfigurationError):
        g.bit(2, 2)


def test_dilution_degenerate_probabilities():
    g0 = d.sample_dilution(10, 0.0, 3)
    g1 = d.sample_dilution(10, 1.0, 3)
    assert g0.edge_count() == 0
    assert g1.edge_count() == g1.pair_count == 45
    assert np.array_equal(g1.degrees(), np.full(10, 9))


def test_dilution_edge_count_concentrates():
    # pooled over graphs the edge count is Binomial(R*pairs, p)
    R, n, p = 200, 20, 0.3
    pairs = math.comb(n, 2)
    total = sum(
        d.sample_dilution(n, p, np.random.SeedSequence((5, r))).edge_count()
        for r in range(R)
    )
    mean = R * pairs * p
    sd = math.sqrt(R * pairs * p * (1 - p))
    assert abs(total - mean) < 5 * sd


def test_dilution_lower_and_degrees_agree():
    g = d.sample_dilution(9, 0.5, 21)
    low = g.lower()
    assert np.all(np.triu(low) == 0)
    assert np.array_equal(low + low.T, g.dense())
    assert np.array_equal(g.degrees(), g.dense().sum(axis=1).astype(int))
    ii, jj = g.edges()
    assert len(ii) == g.edge_count()
    assert np.all(ii < jj)


def test_dilution_pair_independence():
    # sample covariance between two fixed pair indicators should vanish
    R, p = 4000, 0.35
    a = np.empty(R)
    b = np.empty(R)
    for r in range(R):
        g = d.sample_dilution(6, p, np.random.SeedSequence((77, r)))
        a[r] = g.bit(0, 1)
        b[r] = g.bit(3, 4)
    se = 1.0 / math.sqrt(R)
    assert abs(a.mean() - p) < 4 * se * math.sqrt(p * (1 - p))
    assert abs(np.cov(a, b)[0, 1]) < 4 * se * p * (1 - p) + 4e-3


@given(st.integers(2, 14), st.floats(0.05, 0.95), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_dilution_bitset_roundtrip(n, p, seed):
    g = d.sample_dilution(n, p, seed)
    m = g.dense()
    # dense view, bit probes, edge list, and degree vector all consistent
    ii, jj = g.edges()
    rebuilt = np.zeros_like(m)
    rebuilt[ii, jj] = 1
    rebuilt[jj, ii] = 1
    assert np.array_equal(rebuilt, m)
    assert g.edge_count() == int(m.sum()) // 2
    assert np.array_equal(g.degrees(), m.sum(axis=1).astype(int))


def test_dilution_regime_values():
    assert d.dilution_regime(100, 0.0) == 1.0
    assert d.dilution_regime(100, 0.5) == pytest.approx(0.1)
    assert d.dilution_regime(50, 0.3) == pytest.approx(50 ** -0.3)
    with pytest.raises(d.ConfigurationError):
        d.dilution_regime(100, 1.0)
    with pytest.raises(d.ConfigurationError):
        d.dilution_regime(100, -0.1)


def test_dilution_regime_warns_when_np_small():
    with pytest.warns(UserWarning):
        d.dilution_regime(4, 0.9)  # np ~ 1.15, far below 10
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        d.dilution_regime(1000, 0.3)  # np ~ 126, quiet


# ---------------------------------------------------------------- seeds


def test_seed_policy_streams_are_stable_and_distinct():
    pol = d.SeedPolicy(master_seed=6)
    s1 = pol.child("replicate/n50", 3)
    s2 = pol.child("replicate/n50", 3)
    s3 = pol.child("replicate/n50", 4)
    s4 = pol.child("replicate/n100", 3)
    r1 = np.random.Generator(np.random.PCG64(s1)).random(8)
    assert np.array_equal(r1, np.random.Generator(np.random.PCG64(s2)).random(8))
    assert not np.array_equal(r1, np.random.Generator(np.random.PCG64(s3)).random(8))
    assert not np.array_equal(r1, np.random.Generator(np.random.PCG64(s4)).random(8))


def test_seed_policy_differs_across_masters():
    a = d.SeedPolicy(master_seed=1).child("x", 0)
    b = d.SeedPolicy(master_seed=2).child("x", 0)
    ra = np.random.Generator(np.random.PCG64(a)).random(4)
    rb = np.random.Generator(np.random.PCG64(b)).random(4)
    assert not np.array_equal(ra, rb)


def test_as_generator_accepts_common_seed_types():
    g1 = d.as_generator(5)
    g2 = d.as_generator(np.random.SeedSequence(5))
    assert np.array_equal(g1.random(4), g2.random(4))
    g3 = d.as_generator(g1)
    assert g3 is g1


def test_rng_of_helper_matches_seedsequence():
    assert np.array_equal(rng_of(9).random(3), d.as_generator(9).random(3))
