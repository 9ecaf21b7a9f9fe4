import numpy as np
import pytest
from hypothesis import given, strategies as st

from hodgelab.commutator import TrigPolynomial, commutator, commutator_bound_check, cup_df
from hodgelab.dec import FormField, PeriodicGrid, random_form
from hodgelab.metrics import TransitionData, _smooth_random_field, flat_metric, metric_from_transitions, scaled_metric


def sin1d():
    return TrigPolynomial([[1]], [0.0], [1.0])


def test_constant_commutes(rng):
    g = PeriodicGrid(2, 8)
    w = random_form(g, 1, rng)
    assert np.abs(commutator(g, TrigPolynomial.constant(2, 3.5), w).data).max() < 1e-12


def test_t1_sine_bound(rng):
    g = PeriodicGrid(1, 64)
    f = sin1d()
    assert f.grad_sup() >= 2 * np.pi  # certified upper bound on max|f'|
    r = commutator_bound_check(g, flat_metric(g), f, random_form(g, 0, rng))
    assert r.ratio <= 2 * np.pi * (1 + r.eps_h)
    assert r.holds


@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_commutator_is_cup_product(n, seed):
    rng = np.random.default_rng(seed)
    g = PeriodicGrid(n, 6)
    f = TrigPolynomial.random(n, rng)
    for k in range(n):
        w = random_form(g, k, rng)
        c, cup = commutator(g, f, w), cup_df(g, f, w)
        assert np.abs(c.data - cup.data).max() <= 1e-12 * max(1.0, np.abs(cup.data).max())


def test_scaled_metric_shrinks_like_inverse_c(rng):
    g = PeriodicGrid(2, 16)
    f = TrigPolynomial.random(2, rng, max_freq=1, terms=2)
    w = random_form(g, 1, rng)
    base = commutator_bound_check(g, flat_metric(g), f, w).ratio
    for c in (2.0, 3.0):
        assert commutator_bound_check(g, scaled_metric(g, c), f, w).ratio == pytest.approx(base / c, rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_bound_holds_on_smooth_metrics(n, rng):
    g = PeriodicGrid(n, 8)
    met = metric_from_transitions(g, TransitionData((_smooth_random_field(g, rng, (n, n), modes=1),)))
    for k in range(n):
        f = TrigPolynomial.random(n, rng, max_freq=1, terms=3)
        assert commutator_bound_check(g, met, f, random_form(g, k, rng)).holds


def test_allowance_shrinks_with_h(rng):
    f = TrigPolynomial.random(2, rng, max_freq=1, terms=2)
    eps = []
    for N in (16, 32):
        g = PeriodicGrid(2, N)
        eps.append(commutator_bound_check(g, flat_metric(g), f, FormField.constant(g, 0, [1.0])).eps_h)
    assert eps[1] == pytest.approx(eps[0] / 2, rel=1e-9)
