import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bnfuse.factors import Factor, factor_marginalize, factor_product, factor_reduce


def _random_factor(rng, pool):
    k = int(rng.integers(1, min(3, len(pool)) + 1))
    scope = tuple(sorted(rng.choice(len(pool), size=k, replace=False)))
    names = tuple(pool[i][0] for i in scope)
    cards = tuple(pool[i][1] for i in scope)
    return Factor(names, rng.random(cards) + 0.01)


POOL = (("a", 2), ("b", 3), ("c", 2), ("d", 4))
CARD = dict(POOL)


def _brute_product(f, g):
    names = list(dict.fromkeys(f.scope + g.scope))
    out = np.zeros(tuple(CARD[v] for v in names))
    for idx in np.ndindex(out.shape):
        a = dict(zip(names, idx))
        fv = f.values[tuple(a[v] for v in f.scope)]
        gv = g.values[tuple(a[v] for v in g.scope)]
        out[idx] = fv * gv
    return names, out


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_product_matches_pointwise_definition(seed):
    rng = np.random.default_rng(seed)
    f, g = _random_factor(rng, POOL), _random_factor(rng, POOL)
    names, want = _brute_product(f, g)
    got = factor_product(f, g)
    # align axes before comparing
    perm = [got.scope.index(v) for v in names]
    assert np.allclose(np.transpose(got.values, perm), want, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_product_commutes_and_associates(seed):
    rng = np.random.default_rng(seed)
    f, g, h = (_random_factor(rng, POOL) for _ in range(3))

    fg, gf = factor_product(f, g), factor_product(g, f)
    perm = [gf.scope.index(v) for v in fg.scope]
    assert np.allclose(fg.values, np.transpose(gf.values, perm), rtol=1e-12)

    left = factor_product(factor_product(f, g), h)
    right = factor_product(f, factor_product(g, h))
    perm = [right.scope.index(v) for v in left.scope]
    assert np.allclose(left.values, np.transpose(right.values, perm), rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_marginalize_then_sum_preserves_total(seed):
    rng = np.random.default_rng(seed)
    f = _random_factor(rng, POOL)
    var = f.scope[int(rng.integers(len(f.scope)))]
    m = factor_marginalize(f, var)
    assert var not in m.scope
    assert np.isclose(np.sum(m.values), np.sum(f.values), rtol=1e-12)


def test_marginalize_sums_named_axis():
    f = Factor(("a", "b"), np.arange(6, dtype=float).reshape(2, 3))
    m = factor_marginalize(f, "b")
    assert m.scope == ("a",)
    assert m.values.tolist() == [3.0, 12.0]


def test_reduce_slices_named_value():
    f = Factor(("a", "b"), np.arange(6, dtype=float).reshape(2, 3))
    r = factor_reduce(f, "a", 1)
    assert r.scope == ("b",)
    assert r.values.tolist() == [3.0, 4.0, 5.0]


def test_product_rejects_domain_mismatch():
    f = Factor(("a",), np.array([0.5, 0.5]))
    g = Factor(("a", "b"), np.ones((3, 2)))
    with pytest.raises(ValueError, match="domain-mismatch"):
        factor_product(f, g)


def test_scalar_factor_acts_as_constant():
    one = Factor((), np.array(2.0))
    f = Factor(("a",), np.array([0.25, 0.75]))
    out = factor_product(one, f)
    assert out.scope == ("a",)
    assert np.allclose(out.values, [0.5, 1.5])
