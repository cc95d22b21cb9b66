import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cmshift import (DepthPotential, PreconditionError, ResourceCapError, TruncatedShift,
                     build_matrix, classify_a_function, complex_spectrum, constant, from_weights,
                     integrate, leading_eigendata, letter_values, pressure_by_limit, rpf_convergence,
                     verify_gibbs)
from cmshift.transfer import spectra_distance

SHIFTS = [TruncatedShift.full(2), TruncatedShift.full(3), TruncatedShift.golden_mean()]


@st.composite
def potentials(draw, max_depth=3):
    shift = draw(st.sampled_from(SHIFTS))
    k = draw(st.integers(1, max_depth))
    n = shift.words_array(k).shape[0]
    vals = draw(arrays(float, n, elements=st.floats(-2, 2)))
    return DepthPotential(shift, k, vals)


@given(potentials())
def test_eigendata_invariants(u):
    spec = leading_eigendata(u, gibbs_lmax=0)
    L = spec.transfer.matrix
    assert np.allclose(L @ spec.h, spec.lam * spec.h, rtol=1e-10)
    assert np.allclose(spec.nu @ L, spec.lam * spec.nu, rtol=1e-10)
    assert spec.nu.sum() == pytest.approx(1.0)
    assert spec.nu @ spec.h == pytest.approx(1.0)
    assert spec.positivity_margin > 0
    assert spec.lam == pytest.approx(np.abs(np.linalg.eigvals(L)).max(), rel=1e-10)


@given(potentials(max_depth=2), st.floats(-3, 3))
def test_pressure_shifts_with_constants(u, c):
    p = leading_eigendata(u, gibbs_lmax=0).pressure
    assert leading_eigendata(u + c, gibbs_lmax=0).pressure == pytest.approx(p + c, abs=1e-10)


@given(potentials(max_depth=2))
def test_cylinder_masses_are_consistent(u):
    spec = leading_eigendata(u, gibbs_lmax=0)
    for against in ("nu", "mu"):
        m1 = spec.cylinder_masses(1, against)
        m2 = spec.cylinder_masses(2, against)
        assert m1.sum() == pytest.approx(1.0)
        first = u.shift.words_array(2)[:, 0]
        assert np.allclose(np.bincount(first - 1, weights=m2), m1, atol=1e-12)


@given(potentials(max_depth=2))
def test_gibbs_measure_is_invariant(u):
    # mu(sigma^-1 [e]) = sum_a mu([a e]) = mu([e])
    spec = leading_eigendata(u, gibbs_lmax=0)
    m1 = spec.cylinder_masses(1, "mu")
    m2 = spec.cylinder_masses(2, "mu")
    second = u.shift.words_array(2)[:, 1]
    assert np.allclose(np.bincount(second - 1, weights=m2, minlength=m1.size), m1, atol=1e-12)


@given(potentials(max_depth=2))
def test_pressure_limit_approaches_pressure(u):
    p = leading_eigendata(u, gibbs_lmax=0).pressure
    seq = pressure_by_limit(u, 10)
    assert np.all(seq >= p - 1e-12)
    # Z_2n <= Z_n^2 since a sup over a 2n-cylinder splits into two n-cylinders
    for n in range(1, 6):
        assert seq[2 * n - 1] <= seq[n - 1] + 1e-12


def test_pressure_limit_golden_counts():
    seq = pressure_by_limit(constant(TruncatedShift.golden_mean(), 0.0), 8)
    fib = [2, 3, 5, 8, 13, 21, 34, 55]
    assert np.allclose(seq, [math.log(f) / n for n, f in enumerate(fib, 1)])


@given(potentials(max_depth=2), st.floats(0.1, 3.0))
def test_rotation_by_constant(u, a):
    base = complex_spectrum(u).eigenvalues
    rot = complex_spectrum(u + 1j * a).eigenvalues
    assert spectra_distance(rot, np.exp(1j * a) * base) <= 1e-10 * max(1.0, abs(base[0]))


def test_gibbs_constant_golden():
    spec = leading_eigendata(constant(TruncatedShift.golden_mean(), 0.0), gibbs_lmax=6)
    phi = (1 + math.sqrt(5)) / 2
    assert spec.gibbs_constant == pytest.approx(phi, rel=1e-9)
    rep = verify_gibbs(spec, 4)
    assert len(rep.by_length) == 4 and rep.c >= 1


def test_bernoulli_is_exact():
    spec = leading_eigendata(from_weights(TruncatedShift.full(3), [0.2, 0.3, 0.5]))
    assert spec.pressure == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(spec.cylinder_masses(1), [0.2, 0.3, 0.5])
    assert spec.gibbs_constant == pytest.approx(1.0)


def test_rpf_rate_on_perturbed_system():
    sh = TruncatedShift.full(3)
    u = DepthPotential(sh, 2, np.linspace(-1, 1, 9))
    spec = leading_eigendata(u)
    rep = rpf_convergence(spec, np.array([1.0, -2.0, 0.5]), 30)
    assert rep.ok and rep.rate == pytest.approx(spec.gamma, rel=0.05)


def test_integrate():
    spec = leading_eigendata(from_weights(TruncatedShift.full(2), [0.25, 0.75]))
    xi = letter_values(TruncatedShift.full(2), [1.0, 3.0])
    assert integrate(spec, xi, "mu") == pytest.approx(2.5)
    assert integrate(spec, np.array([1.0, 3.0]), "nu") == pytest.approx(2.5)


def test_classification():
    sh = TruncatedShift.full(2)
    u = from_weights(sh, [0.5, 0.5])
    lattice = letter_values(sh, [1.0, 2.0])
    c = classify_a_function(u + lattice * (2j * math.pi))
    assert c.kind == "a-function" and c.angle == pytest.approx(0.0, abs=1e-8)
    assert classify_a_function(u + lattice * (1j * math.pi)).kind == "regular"
    c = classify_a_function(u + letter_values(sh, [1.0, 3.0]) * (1j * math.pi))
    assert c.kind == "a-function" and c.angle == pytest.approx(math.pi)
    c = classify_a_function(u + letter_values(sh, [1.0, math.sqrt(2)]) * 1j)
    assert c.kind == "regular" and c.spectrum.margin > 1e-3


def test_complex_potential_rejected_for_eigendata():
    with pytest.raises(PreconditionError):
        leading_eigendata(constant(TruncatedShift.full(2), 1j))


def test_reducible_rejected():
    with pytest.raises(PreconditionError, match="irreducible"):
        leading_eigendata(constant(TruncatedShift([[1, 0], [0, 1]]), 0.0))


def test_dense_cap():
    with pytest.raises(ResourceCapError):
        complex_spectrum(constant(TruncatedShift.full(5), 0.0), dense_cap=4)


def test_matrix_layout():
    sh = TruncatedShift.full(2)
    f = DepthPotential(sh, 2, np.log([1.0, 2.0, 3.0, 4.0]))
    # (L g)(x) = sum_e exp(f(e x)) g(e x)
    L = build_matrix(f).matrix
    assert np.allclose(L, [[1, 3], [2, 4]])
