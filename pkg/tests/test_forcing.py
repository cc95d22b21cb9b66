import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from cmshift import Forcing, ForcingFamily, PreconditionError
from cmshift.lattice import in_lattice, real_span


@pytest.mark.parametrize("f", [Forcing.step(), Forcing.exp_step(0.7), Forcing.box(-0.5, 2.0),
                               Forcing.tabulated([0.0, 1.0, 3.0], [1.0, 2.0, 0.5])])
@pytest.mark.parametrize("w", [-0.3, -1.0 + 2.0j])
def test_laplace_against_quadrature(f, w):
    lo = max(f.support_lo, -50.0)
    hi = min(f.support_hi, 200.0)
    re = quad(lambda t: (np.exp(w * t) * f(t)).real, lo, hi, limit=400, points=[0, 1, 2, 3])[0]
    im = quad(lambda t: (np.exp(w * t) * f(t)).imag, lo, hi, limit=400, points=[0, 1, 2, 3])[0]
    assert f.laplace(w) == pytest.approx(re + 1j * im, rel=1e-7, abs=1e-10)


@given(st.floats(0.05, 3.0))
def test_tilted_integral_is_laplace_at_minus_delta(delta):
    for f in (Forcing.step(), Forcing.exp_step(0.4), Forcing.box(1.0, 2.5)):
        assert f.tilted_integral(delta, absolute=False) == pytest.approx(f.laplace(-delta).real)


def test_divergent_integrals():
    assert Forcing.step().tilted_integral(0.0) == math.inf
    assert Forcing.exp_step(0.5).tilted_integral(-0.5) == math.inf
    grow = Forcing.from_callable(lambda t: np.exp(0.1 * t), (0.0, math.inf))
    assert grow.tilted_integral(0.0) == math.inf
    assert grow.tilted_integral(0.5) == pytest.approx(1 / 0.4, rel=1e-8)


def test_tilted_avoids_overflow():
    v = Forcing.exp_step(1.0).tilted(np.array([1000.0]), -0.5)
    assert np.isfinite(v).all() and v[0] == pytest.approx(math.exp(-500.0))


def test_supports_and_dri():
    assert Forcing.step().support_lo == 0.0 and Forcing.step().support_hi == math.inf
    box = Forcing.box(0.0, 1.0)
    assert box.dri_gap(0.0, 1 / 64, (-1, 3)) < box.dri_gap(0.0, 1 / 8, (-1, 3))


def test_family_lookup():
    fam = ForcingFamily(Forcing.step(), by_state={(2,): Forcing.box(0, 1)})
    states = np.array([[1], [2]])
    vals = fam.evaluate(states, np.array([0.5, 1.5]))
    assert np.array_equal(vals, [[1.0, 1.0], [1.0, 0.0]])
    assert fam.support_lo(states) == 0.0


@given(st.lists(st.integers(1, 40), min_size=1, max_size=5), st.sampled_from([1.0, 0.5, math.pi, 0.1]))
def test_real_span_of_integer_multiples(ks, a):
    rep = real_span([k * a for k in ks])
    assert rep.discrete
    assert rep.span == pytest.approx(math.gcd(*ks) * a, rel=1e-9)
    assert all(in_lattice(k * a, rep.span) for k in ks)


def test_irrational_ratio_is_not_discrete():
    rep = real_span([1.0, math.sqrt(2)])
    assert not rep.discrete and rep.witness == pytest.approx(math.sqrt(2))


def test_forcing_validation():
    with pytest.raises(PreconditionError):
        Forcing.box(2.0, 1.0)
