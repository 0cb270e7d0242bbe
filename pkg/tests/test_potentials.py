import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from tree_spectra import (
    Constant,
    DecayEnvelope,
    DomainError,
    HorizonExceededError,
    IncompleteDataError,
    InconclusiveError,
    Power,
    Tabulated,
    b_regular,
    branching_function,
    eta_power_potential,
    eta_sequence,
    example_potential,
    indicator,
    l1_norm,
    neumann_correction,
    piecewise,
    potential_from_dict,
    weyl_coefficient,
    zero_potential,
)
from tree_spectra.potentials import Sum, radial_integral, radius_moment

SQRT2 = math.sqrt(2.0)
TREE = b_regular(2, 3, horizon=30)


def _quad_tree(tree, f, a, b):
    """Independent oracle: piecewise quad of f(t) g0(t) split at the radii."""
    pts = np.unique(np.concatenate([[a, b], tree.radii[(tree.radii > a) & (tree.radii < b)]]))
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        g = branching_function(tree, 0.5 * (lo + hi))
        total += g * integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0]
    return total


def _mixed():
    return piecewise([
        (0.0, 1.0, Constant(0.7)),
        (1.0, 2.5, Power(2.0, -1.5)),
        (2.5, 4.0, Tabulated((2.5, 3.0, 4.0), (0.3, 1.1, 0.0))),
        (4.5, 6.0, Sum((Constant(0.2), Power(1.0, -2.0)))),
    ], support_bound=6.0)


def test_indicator_integrals():
    V = indicator(1.0, 0.0, 2.0)
    assert l1_norm(TREE, V) == pytest.approx(4.0 - SQRT2, rel=1e-14)
    assert weyl_coefficient(TREE, V) == pytest.approx((4.0 - SQRT2) / math.pi, rel=1e-14)
    assert neumann_correction(TREE, V) == pytest.approx(2.0, rel=1e-14)


def test_mixed_profile_integrals_against_quad():
    V = _mixed()
    f = lambda t: float(V.value(np.array([t]))[0])
    assert l1_norm(TREE, V) == pytest.approx(_quad_tree(TREE, f, 0.0, 6.0), rel=1e-9)
    root = lambda t: math.sqrt(f(t))
    assert weyl_coefficient(TREE, V) * math.pi == pytest.approx(_quad_tree(TREE, root, 0.0, 6.0), rel=1e-7)
    assert radius_moment(TREE, V) == pytest.approx(_quad_tree(TREE, lambda t: t * f(t), 0.0, 6.0), rel=1e-9)


def test_cell_integrals_against_quad(rng):
    V = _mixed()
    edges = np.sort(np.concatenate([[0.0, 6.0], rng.uniform(0, 6, 40)]))
    got = V.cell_integrals(edges)
    f = lambda t: float(V.value(np.array([t]))[0])
    want = [integrate.quad(f, a, b, points=[1.0, 2.5, 3.0, 4.0, 4.5], limit=200)[0] if b > a else 0.0
            for a, b in zip(edges[:-1], edges[1:])]
    np.testing.assert_allclose(got, want, rtol=1e-8, atol=1e-13)
    assert got.sum() == pytest.approx(V.moment(0.0, 6.0), rel=1e-12)


def test_cell_integrals_beyond_known_range():
    V = piecewise([(0.0, 2.0, Constant(1.0))])
    with pytest.raises(IncompleteDataError):
        V.cell_integrals(np.array([0.0, 1.0, 3.0]))


@pytest.mark.parametrize("p", [0.75, 1.5, 3.0])
def test_example_eta_closed_form(p):
    tree = b_regular(2, 3, horizon=30)
    eta = eta_sequence(tree, example_potential(tree, p), 20)
    n = np.arange(21)
    want = (1.0 - 2.0**-0.5) * 2.0 ** (-n / p)
    want[0] = 1.0  # t_0 = 0, so the first edge carries the full factor
    np.testing.assert_allclose(eta.values, want, rtol=1e-13)
    np.testing.assert_array_equal(eta.weights, 2.0**n)
    assert eta.tail.q == pytest.approx(p)
    assert eta.tail.tight


def test_eta_power_sequence_is_exact():
    tree = b_regular(3, 3.5, horizon=25)
    eta = eta_sequence(tree, eta_power_potential(tree, 0.8))
    np.testing.assert_allclose(eta.values, 3.0 ** (-np.arange(25) / 0.8), rtol=1e-12)


def test_eta_matches_quadrature():
    V = _mixed()
    eta = eta_sequence(TREE, V, 6)
    t = TREE.radii
    f = lambda s: float(V.value(np.array([s]))[0])
    for n in range(7):
        a, b = t[n], t[n + 1]
        if a >= 6.0:
            assert eta.values[n] == 0.0
            continue
        hi = min(b, 6.0)
        want = b * integrate.quad(f, a, hi, points=[x for x in (1.0, 2.5, 3.0, 4.0, 4.5) if a < x < hi], limit=200)[0]
        assert eta.values[n] == pytest.approx(want, rel=1e-9, abs=1e-14)


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_eta_is_linear(a, b):
    V1 = indicator(1.0, 0.0, 3.0)
    V2 = piecewise([(0.5, 5.0, Power(1.0, -1.0))], support_bound=5.0)
    combo = V1.scaled(a) + V2.scaled(b)
    e1 = eta_sequence(TREE, V1, 6).values
    e2 = eta_sequence(TREE, V2, 6).values
    np.testing.assert_allclose(eta_sequence(TREE, combo, 6).values, a * e1 + b * e2, rtol=1e-12, atol=1e-300)


def test_eta_vanishes_beyond_support():
    V = indicator(1.0, 0.0, 2.0)
    eta = eta_sequence(TREE, V, 10)
    assert np.all(eta.values[2:] == 0)
    assert eta.tail is None


def test_eta_horizon_error():
    with pytest.raises(HorizonExceededError):
        eta_sequence(b_regular(2, 3, horizon=5), indicator(1, 0, 1), 5)


def test_neumann_correction_equals_first_eta():
    for V in (_mixed(), example_potential(TREE, 1.5), indicator(2.0, 0.3, 5.0)):
        assert neumann_correction(TREE, V) == pytest.approx(eta_sequence(TREE, V, 0).values[0], rel=1e-14)


def test_zero_potential():
    V = zero_potential()
    assert l1_norm(TREE, V) == 0.0
    assert weyl_coefficient(TREE, V) == 0.0
    assert neumann_correction(TREE, V) == 0.0
    assert V.is_zero


def test_weyl_divergent_tail():
    # v = t^-4 with g0 ~ t^2: int v^(1/2) g0 diverges
    V = piecewise([(TREE.radii[1], 100.0, Power(1.0, -4.0))], decay_envelope=DecayEnvelope(1.0, 4.0, tight=True))
    with pytest.raises(InconclusiveError):
        weyl_coefficient(TREE, V)
    assert math.isfinite(l1_norm(TREE, V))


def test_loose_envelope_is_inconclusive():
    V = piecewise([(0.0, 10.0, Constant(1.0))], decay_envelope=DecayEnvelope(1.0, 2.5, tight=False))
    with pytest.raises(InconclusiveError):
        l1_norm(TREE, V)


def test_envelope_tail_bound_for_power_decay():
    # v = t^-5 exactly: the envelope bound uses g0 <= t^2
    V = piecewise([(1.0, 50.0, Power(1.0, -5.0))], decay_envelope=DecayEnvelope(1.0, 5.0))
    full = l1_norm(TREE, V)
    body = radial_integral(TREE, V, upto=50.0)
    assert body < full <= body + 50.0**-2 / 2 * (1 + 1e-12)


@pytest.mark.parametrize("bad", [
    lambda: Constant(-1.0),
    lambda: Power(-1.0, 2.0),
    lambda: Tabulated((1.0, 0.5), (1.0, 1.0)),
    lambda: Tabulated((0.0, 1.0), (1.0, -1.0)),
    lambda: piecewise([(0.0, 2.0, Constant(1.0)), (1.0, 3.0, Constant(1.0))]),
    lambda: piecewise([(2.0, 1.0, Constant(1.0))]),
    lambda: piecewise([(0.0, 3.0, Constant(1.0))], support_bound=2.0),
    lambda: potential_from_dict({"pieces": [{"from": 0, "to": 1, "profile": {"kind": "gauss"}}]}),
])
def test_potential_validation(bad):
    with pytest.raises(DomainError):
        bad()


def test_value_beyond_known_range():
    V = piecewise([(0.0, 2.0, Constant(1.0))])
    with pytest.raises(IncompleteDataError):
        V.value(3.0)
    assert indicator(1.0, 0.0, 2.0).value(3.0) == 0.0


def test_potential_json_round_trip():
    for V in (_mixed(), example_potential(TREE, 1.5), indicator(2.0, 0.5, 3.0)):
        W = potential_from_dict(V.to_dict())
        np.testing.assert_allclose(W.value(np.linspace(0.01, 6, 50)), V.value(np.linspace(0.01, 6, 50)))
        assert W.decay_envelope == V.decay_envelope
        assert W.support_bound == V.support_bound


def test_scaling_and_addition():
    V = _mixed()
    assert l1_norm(TREE, V.scaled(3.0)) == pytest.approx(3 * l1_norm(TREE, V), rel=1e-13)
    W = V + indicator(1.0, 0.0, 2.0)
    assert l1_norm(TREE, W) == pytest.approx(l1_norm(TREE, V) + 4.0 - SQRT2, rel=1e-12)
