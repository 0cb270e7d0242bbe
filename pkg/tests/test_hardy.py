import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tree_spectra import (
    Constant,
    DecayEnvelope,
    DomainError,
    InapplicableError,
    Power,
    b_regular,
    bound_rhs,
    eta_power_potential,
    eta_sequence,
    example_potential,
    hardy_constants,
    indicator,
    piecewise,
    weak_quasinorm_radial,
    weak_quasinorm_sequence,
    zero_potential,
)
from tree_spectra.hardy import THEOREMS, strong_integral_radial, weak_functional_radial, weak_sequence_functional
from tree_spectra.potentials import PowerTail

TREE = b_regular(2, 3, horizon=20)


def _h0_b2d3(t, gens=400):
    """Independent h0 for b_regular(2, 3): int_t^inf ds / 2^n, summed directly."""
    n = np.arange(gens)
    r = 2.0 ** (n / 2.0)
    r[0] = 0.0
    out = np.empty_like(t)
    for i, x in enumerate(t):
        k = int(np.searchsorted(r, x, side="left")) - 1  # x in (r_k, r_{k+1}]
        out[i] = (r[k + 1] - x) / 2.0**k + np.sum(np.diff(r[k + 1:]) / 2.0 ** n[k + 1:-1])
    return out


def test_zero_potential_bracket():
    rep = hardy_constants(TREE, zero_potential())
    assert (rep.B1, rep.B2, rep.cv_lower, rep.cv_upper) == (0.0, 0.0, 0.0, 0.0)


def test_b1_matches_dense_grid_sup():
    c = 1e-6
    R = float(TREE.max_radius)
    V = piecewise([(0.0, R, Power(c, -2.0))])
    rep = hardy_constants(TREE, V)
    t1 = float(TREE.radii[1])
    t = np.unique(np.concatenate([np.geomspace(t1, R, 100_000), TREE.radii[1:]]))
    # closed-form prefix int_{t1}^t c s^-2 g0 ds
    gen = np.searchsorted(TREE.radii, t, side="left") - 1
    gen = np.maximum(gen, 1)
    full = c * 2.0 ** np.arange(TREE.horizon) * (1 / np.maximum(TREE.radii[:-1], t1) - 1 / TREE.radii[1:])
    full[0] = 0.0
    cum = np.concatenate([[0.0], np.cumsum(full)])
    prefix = cum[gen] + c * 2.0**gen * (1 / TREE.radii[gen] - 1 / t)
    prefix[t <= t1] = 0.0
    dense = float(np.max(prefix * _h0_b2d3(t)))
    assert rep.B1 == pytest.approx(dense, rel=1e-6)
    assert rep.B1 >= dense * (1 - 1e-12)
    # t * int_t^{t1} c s^-2 ds = c (1 - t/t1), sup at t -> 0
    assert rep.B2 == pytest.approx(c, rel=1e-12)
    assert rep.cv_lower <= rep.cv_upper


def test_b2_vanishes_away_from_root():
    t = TREE.radii
    rep = hardy_constants(TREE, indicator(1.0, float(t[2]), float(t[3])))
    assert rep.B2 == 0.0
    assert rep.B1 > 0


def test_recurrent_b0_closed_form():
    # g0 = 1 on (0, 1]: B0 = sup (1 - t) t = 1/4
    rep = hardy_constants(b_regular(2, 2.0, horizon=30), indicator(1.0, 0.0, 1.0))
    assert rep.tree_class == "Recurrent"
    assert rep.B0 == pytest.approx(0.25, rel=1e-10)
    assert (rep.cv_lower, rep.cv_upper) == (pytest.approx(0.25), pytest.approx(1.0))


def test_divergent_tail_is_not_a_hardy_weight():
    V = piecewise([(0.0, 10.0, Constant(1.0))], decay_envelope=DecayEnvelope(1.0, 1.0, tight=True))
    rep = hardy_constants(b_regular(2, 2.0), V)
    assert math.isinf(rep.B0)
    assert not rep.is_hardy_weight


# ---------------------------------------------------------------------------
# weak quasinorms
# ---------------------------------------------------------------------------


def test_sequence_examples():
    n = np.arange(1, 500)
    for p in (0.5, 1.0, 2.5):
        assert weak_quasinorm_sequence(n ** (-1.0 / p), p) == pytest.approx(1.0, rel=1e-12)
    assert weak_quasinorm_sequence(np.zeros(7), 1.3) == 0.0
    val, _ = weak_sequence_functional([0, 0, 3.0, 0], 1.7, [1, 1, 5.0, 1])
    assert val == pytest.approx(3.0**1.7 * 5.0, rel=1e-14)


def test_example_sequence_functional_is_order_one():
    p = 1.5
    n = np.arange(60)
    vals = []
    for N in (20, 40, 60):
        val, _ = weak_sequence_functional(2.0 ** (-n[:N] / p), p, 2.0 ** n[:N])
        vals.append(val)
    assert 0 < vals[0] <= vals[-1] < 10
    assert vals[-1] == pytest.approx(vals[1], rel=1e-6)


@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-6, 10.0)), min_size=1, max_size=40), st.floats(0.2, 4.0), st.integers(0, 2**31))
def test_sequence_functional_matches_brute_force(values, p, seed):
    w = np.random.default_rng(seed).uniform(0.1, 3.0, len(values))
    f = np.asarray(values)
    got, _ = weak_sequence_functional(f, p, w)
    # brute force: t^p * sum_{f > t} w just below every distinct level
    best = 0.0
    for lvl in np.unique(f[f > 0]):
        t = lvl * (1 - 1e-13)
        best = max(best, t**p * w[f > t].sum())
    assert got == pytest.approx(best, rel=1e-10, abs=1e-300)


@given(st.floats(0.05, 20.0), st.floats(0.3, 3.0))
def test_radial_quasinorm_homogeneity(c, p):
    f = piecewise([(0.0, 1.0, Constant(2.0)), (1.0, 6.0, Power(1.0, -1.3))], support_bound=6.0)
    base = weak_quasinorm_radial(TREE, f, p)
    assert weak_quasinorm_radial(TREE, f.scaled(c), p) == pytest.approx(c * base, rel=1e-9)


def test_radial_indicator_example():
    t1 = float(TREE.radii[1])
    for c, p in ((2.0, 1.5), (0.3, 0.7)):
        assert weak_quasinorm_radial(TREE, indicator(c, 0.0, t1), p) ** p == pytest.approx(c**p * t1, rel=1e-12)


def test_radial_candidates_match_dense_levels():
    f = piecewise([(0.5, 8.0, Power(1.0, -1.0))], support_bound=8.0)
    p = 1.7
    got, where = weak_functional_radial(TREE, f, p)
    t = TREE.radii

    def mass(s):
        # |{f > s}| with g0 density: int_{0.5}^{min(8, 1/s)} g0
        hi = np.minimum(8.0, 1.0 / s)
        pts = np.clip(t, 0.5, None)
        out = np.zeros_like(s)
        for n in range(TREE.horizon):
            a, b = max(t[n], 0.5), t[n + 1]
            out += 2.0**n * np.clip(np.minimum(hi, b) - a, 0, None) * (b > a)
        return out

    s = np.geomspace(1 / 8.0, 2.0, 100_000)
    vals = s**p * mass(s)
    i = int(np.argmax(vals))
    s2 = np.linspace(s[max(i - 1, 0)], s[min(i + 1, s.size - 1)], 100_000)
    dense = max(vals[i], float(np.max(s2**p * mass(s2))))
    assert got == pytest.approx(dense, rel=1e-9)


@given(st.floats(0.1, 3.0), st.floats(-2.5, 0.0), st.floats(0.3, 3.0), st.floats(0.5, 2.5))
def test_weak_below_strong(c, gamma, p, split):
    f = piecewise([(0.2, split, Constant(c)), (split, 7.0, Power(c, gamma))], support_bound=7.0)
    weak, _ = weak_functional_radial(TREE, f, p)
    strong = strong_integral_radial(TREE, f, p)
    assert weak <= strong * (1 + 1e-9)


def test_tabulated_is_rejected():
    from tree_spectra import Tabulated

    f = piecewise([(0.0, 1.0, Tabulated((0.0, 1.0), (1.0, 2.0)))], support_bound=1.0)
    with pytest.raises(DomainError):
        weak_quasinorm_radial(TREE, f, 1.0)


def test_tail_verdicts():
    vals = 2.0 ** (-np.arange(20) / 1.5)
    w = 2.0 ** np.arange(20)
    assert math.isinf(weak_quasinorm_sequence(vals, 1.0, w, PowerTail(1.5, True)))
    assert math.isfinite(weak_quasinorm_sequence(vals, 1.5, w, PowerTail(1.5, True)))


# ---------------------------------------------------------------------------
# theorem functionals
# ---------------------------------------------------------------------------

BIG = b_regular(2, 3, horizon=40)


def test_half_power_sum_diverges_for_example():
    assert math.isinf(bound_rhs("eq-1/2", BIG, example_potential(BIG, 1.5), 0.5).value)


@pytest.mark.parametrize("q,finite", [(0.7, False), (0.75, False), (0.8, True), (1.2, True)])
def test_strong_sum_boundary(q, finite):
    rep = bound_rhs("strong<1", BIG, example_potential(BIG, 0.75), q)
    assert math.isfinite(rep.value) == finite
    if finite:
        # geometric series oracle: 1 + sum_{n>=1} (c 2^{-n/p})^q 2^n, c = 1 - 2^{-1/2}
        c = 1 - 2**-0.5
        r = 2.0 ** (1 - q / 0.75)
        assert rep.value == pytest.approx(1.0 + c**q * r / (1 - r), rel=1e-9)


@pytest.mark.parametrize("p,q", [(0.75, 0.6), (0.75, 0.9), (0.9, 0.9), (0.6, 0.6)])
def test_p_lt_1_matches_sequence_quasinorm(p, q):
    V = eta_power_potential(BIG, q)
    rep = bound_rhs("p<1", BIG, V, p)
    eta = eta_sequence(BIG, V)
    quasi = weak_quasinorm_sequence(eta.values, p, eta.weights, eta.tail)
    assert math.isfinite(rep.value) == math.isfinite(quasi)
    if math.isfinite(quasi):
        assert rep.value == pytest.approx(quasi**p, rel=1e-12)


def test_bas1_finite_for_example():
    rep = bound_rhs("bas1", BIG, example_potential(BIG, 1.5), 1.5)
    assert 0 < rep.value < math.inf


def test_zero_potential_gives_zero_everywhere():
    V = zero_potential()
    for thm in THEOREMS:
        for p in (1.5, 0.75):
            try:
                rep = bound_rhs(thm, BIG, V, p)
            except InapplicableError:
                continue
            assert rep.value == 0.0
            break
        else:
            pytest.fail(f"{thm} rejected every p")


def test_inapplicable_hypotheses():
    V = indicator(1.0, 0.0, 2.0)
    with pytest.raises(InapplicableError):
        bound_rhs("bas1", b_regular(2, 2.0), V, 1.5)
    with pytest.raises(InapplicableError):
        bound_rhs("eq-<1", BIG, V, 1.5)
    with pytest.raises(InapplicableError):
        bound_rhs("bas", BIG, V, 0.8)
    singular = piecewise([(0.0, 1.0, Power(1.0, -1.0))], support_bound=1.0)
    with pytest.raises(InapplicableError):
        bound_rhs("p<1", BIG, singular, 0.75)
    with pytest.raises(DomainError):
        bound_rhs("nope", BIG, V, 1.0)


def test_neumann_variant_adds_correction():
    V = indicator(1.0, 0.0, 3.0)
    plain = bound_rhs("str<1", BIG, V, 0.8)
    free = bound_rhs("str<1", BIG, V, 0.8, neumann=True)
    assert free.value == pytest.approx(plain.value + float(BIG.radii[1]) * float(BIG.radii[1]), rel=1e-12)


def test_limsup_sequence_is_monotone_in_T():
    rep = bound_rhs("p<1bis", BIG, eta_power_potential(BIG, 0.75), 0.75)
    vals = [v for _, v in rep.sequence]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(vals[:-1], vals[1:]))
