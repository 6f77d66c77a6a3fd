"""Built-in kernels, registration checks, table kernels, centering."""

import math

import numpy as np
import pytest

import diluteu as d
from diluteu.kernels import inner_mc_conditional


def enum_pairs(dist):
    vals = np.asarray(dist.support)
    qs = np.asarray(dist.probs)
    return vals, qs


def test_builtin_names(rad):
    ks = d.register_builtin_kernels(rad)
    assert [k.name for k in ks] == ["product", "additive", "sign"]
    assert d.kernel_by_name("zero", rad).name == "zero"
    with pytest.raises(d.UnsupportedKernelError):
        d.kernel_by_name("cubic", rad)


def test_product_kernel_structure(norm):
    k = d.product_kernel(norm)
    assert k.degenerate_flag  # E[xY] = 0 for a mean-zero law
    assert k.second_moment == pytest.approx(1.0)
    assert k.g_second_moment == pytest.approx(0.0, abs=1e-18)
    x = np.array([0.5, -2.0])
    y = np.array([3.0, 1.5])
    assert np.allclose(k.pair_values(x, y), x * y)


def test_product_requires_centered_law():
    shifted = d.table([1.0], [1.0], auto_center=False)
    with pytest.raises(d.ConfigurationError):
        d.product_kernel(shifted)
    with pytest.raises(d.ConfigurationError):
        d.additive_kernel(shifted)


def test_additive_kernel_structure(rad):
    k = d.additive_kernel(rad)
    assert not k.degenerate_flag
    assert k.second_moment == pytest.approx(2.0)  # E[(X+Y)^2] = 2 Var
    assert k.g_second_moment == pytest.approx(1.0)
    gv = k.conditional_mean(np.array([-1.0, 1.0]))
    assert np.allclose(gv, [-1.0, 1.0])


def test_sign_kernel_closed_forms(skewed):
    # sb = -2/3, q = 1: h = sx sy - sb^2, g = sb (sx - sb)
    k = d.sign_kernel(skewed)
    sb = -2.0 / 3.0
    assert not k.degenerate_flag
    assert k.second_moment == pytest.approx(1.0 - sb**4)  # 65/81
    assert k.g_second_moment == pytest.approx(sb * sb * (1.0 - sb * sb))  # 20/81
    x = np.array([-1.0, 5.0, -1.0])
    y = np.array([5.0, 5.0, -1.0])
    assert np.allclose(k.pair_values(x, y), np.sign(x) * np.sign(y) - sb * sb)
    assert np.allclose(k.conditional_mean(x), sb * (np.sign(x) - sb))
    # pair conditionals against direct enumeration over the law
    vals, qs = enum_pairs(skewed)
    for a in vals:
        for b in vals:
            hya = k.pair_values(vals, np.full(vals.size, a))
            hyb = k.pair_values(vals, np.full(vals.size, b))
            assert float(qs @ (hya * hyb)) == pytest.approx(
                float(k.pair_conditional(np.array([a]), np.array([b]))[0]), abs=1e-12
            )


def test_sign_kernel_degenerate_on_symmetric_laws(rad, norm):
    assert d.sign_kernel(rad).degenerate_flag
    assert d.sign_kernel(norm).degenerate_flag


def test_builtin_centering_by_enumeration(skewed, rad):
    # E[h(X, Y)] must be 0 for every registration
    for dist in (skewed, rad):
        vals, qs = enum_pairs(dist)
        for k in d.register_builtin_kernels(dist):
            hm = k.pair_values(
                np.repeat(vals, vals.size), np.tile(vals, vals.size)
            ).reshape(vals.size, vals.size)
            assert abs(float(qs @ hm @ qs)) < 1e-12


def test_zero_kernel(rad):
    k = d.kernel_by_name("zero", rad)
    assert k.degenerate_flag
    assert np.all(k.pair_values(np.array([1.0, -1.0]), np.array([1.0, 1.0])) == 0.0)


def test_cross_conditional_matches_enumeration(skewed):
    # K(x) = E[g(Y) h(Y, x)] recovered from registered structure
    k = d.sign_kernel(skewed)
    vals, qs = enum_pairs(skewed)
    gv = k.conditional_mean(vals)
    for a in vals:
        hya = k.pair_values(vals, np.full(vals.size, a))
        direct = float(qs @ (gv * hya))
        assert float(k.cross_conditional(np.array([a]))[0]) == pytest.approx(
            direct, abs=1e-12
        )


def test_cross_conditional_needs_structure(rad):
    bare = d.kernel_from_table("flip", [(-1, -1, 1), (-1, 1, -1), (1, 1, 1)])
    with pytest.raises(d.UnsupportedKernelError):
        bare.cross_conditional(np.array([1.0]))


def test_eval_counter_tracks_pair_evaluations(rad):
    k = d.product_kernel(rad)
    k.eval_counter.reset()
    k.pair_values(np.ones(7), np.ones(7))
    k.pair_values(np.ones(5), np.ones(5))
    assert k.eval_counter.count == 12
    k.eval_counter.reset()
    assert k.eval_counter.count == 0


# ------------------------------------------------------------- table kernels


def test_table_kernel_round_trip(rad):
    # product kernel on {-1, +1} written out as triples
    rows = [(-1, -1, 1.0), (-1, 1, -1.0), (1, 1, 1.0)]
    k = d.kernel_from_table("tbl", rows, dist=rad)
    x = np.array([-1.0, 1.0, 1.0])
    y = np.array([1.0, 1.0, -1.0])
    assert np.allclose(k.pair_values(x, y), x * y)
    assert k.second_moment == pytest.approx(1.0)
    assert k.degenerate_flag  # same structure as the product kernel
    ref = d.product_kernel(rad)
    vals = np.array([-1.0, 1.0])
    assert np.allclose(
        k.pair_conditional(vals[:, None], vals[None, :]),
        ref.pair_conditional(vals[:, None], vals[None, :]),
    )


def test_table_kernel_symmetry_conflict():
    rows = [(-1, 1, 2.0), (1, -1, 3.0)]
    with pytest.raises(d.ConfigurationError, match="symmetry"):
        d.kernel_from_table("bad", rows)


def test_table_kernel_coverage_and_centering(rad):
    with pytest.raises(d.ConfigurationError, match="not covered"):
        d.kernel_from_table("partial", [(1, 1, 1.0)], dist=rad)
    # uncentered: constant 1 kernel has E[h] = 1
    rows = [(-1, -1, 1.0), (-1, 1, 1.0), (1, 1, 1.0)]
    with pytest.raises(d.ConfigurationError, match="not centered"):
        d.kernel_from_table("const", rows, dist=rad)


def test_table_kernel_rejects_unknown_points(rad):
    rows = [(-1, -1, 1.0), (-1, 1, -1.0), (1, 1, 1.0)]
    k = d.kernel_from_table("tbl", rows, dist=rad)
    with pytest.raises(d.ConfigurationError):
        k.pair_values(np.array([0.5]), np.array([1.0]))


def test_load_kernel_table(tmp_path, rad):
    f = tmp_path / "k.txt"
    f.write_text("# x y h\n-1 -1 1\n-1 1 -1\n1 1 1\n")
    k = d.load_kernel_table(f, dist=rad)
    assert float(k.pair_values(np.array([-1.0]), np.array([1.0]))[0]) == -1.0


def test_empty_kernel_table():
    with pytest.raises(d.ConfigurationError):
        d.kernel_from_table("empty", [])


# ---------------------------------------------------------------- centering


def test_centered_view_closed_form(skewed):
    k = d.sign_kernel(skewed)
    view = d.centered_view(k)
    x = np.array([-1.0, 5.0])
    y = np.array([5.0, 5.0])
    expect = k.pair_values(x, y) - k.conditional_mean(x) - k.conditional_mean(y)
    assert np.allclose(view.evaluate_tilde(x, y), expect, atol=1e-12)


def test_centered_view_enumerates_table_kernels(rad):
    rows = [(-1, -1, 0.5), (-1, 1, -0.5), (1, 1, 0.5)]
    k = d.kernel_from_table("halfprod", rows, dist=rad)
    view = d.centered_view(k)
    # g = 0 for this kernel, so tilde == h
    x = np.array([-1.0, 1.0])
    assert np.allclose(view.evaluate_tilde(x, x), k.pair_values(x, x))


def test_centered_view_without_law_fails():
    k = d.kernel_from_table("orphan", [(-1, -1, 1.0), (-1, 1, -1.0), (1, 1, 1.0)])
    with pytest.raises(d.ConfigurationError):
        d.centered_view(k)


def test_inner_mc_conditional_close_to_closed_form(skewed):
    k = d.sign_kernel(skewed)
    m = 20000
    est = inner_mc_conditional(k, 5.0, skewed, m, 3)
    exact = float(k.conditional_mean(np.array([5.0]))[0])
    # sd of one h(5, Y) draw is bounded by sup|h| = 1 + (2/3)^2
    assert abs(est - exact) < 4 * 1.5 / math.sqrt(m)


def test_registration_verify_catches_bad_second_moment(rad):
    from dataclasses import replace
    from diluteu.kernels import _verify_registration

    k = replace(d.product_kernel(rad), second_moment=2.5)
    with pytest.raises(d.ConfigurationError):
        _verify_registration(k)
