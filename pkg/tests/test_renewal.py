import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmshift import (DepthPotential, Forcing, ForcingFamily, LatticeStructure, PotentialFamily,
                     PreconditionError, RenewalGrid, RenewalProblem, ResourceCapError,
                     TruncatedShift, asymptote_lattice, asymptotic_constant_nonlattice,
                     cesaro_average, cesaro_limit, check_conditions, constant, laplace_probe,
                     letter_values, renewal_fixed_point, renewal_oracle, trivial_lattice,
                     verify_lattice)

SQ2 = math.sqrt(2)


def problem(xi_vals, forcing=None, eta_vals=None, lattice=False):
    sh = TruncatedShift.full(len(xi_vals))
    eta = constant(sh, 0.0) if eta_vals is None else letter_values(sh, eta_vals)
    xi = letter_values(sh, xi_vals)
    forcing = ForcingFamily.uniform(forcing or Forcing.step())
    return RenewalProblem(PotentialFamily(eta, xi), 1.0, forcing,
                          lattice=trivial_lattice(xi) if lattice else None)


@st.composite
def lattice_problems(draw):
    k = draw(st.integers(1, 2))
    sh = TruncatedShift.full(2)
    n = sh.words_array(k).shape[0]
    eta = DepthPotential(sh, k, draw(st.lists(st.floats(-1.5, 0.5), min_size=n, max_size=n)))
    xi = DepthPotential(sh, k, draw(st.lists(st.sampled_from([1.0, 2.0, 3.0]), min_size=n, max_size=n)))
    f = draw(st.sampled_from([Forcing.step(), Forcing.box(0.0, 1.0), Forcing.exp_step(0.5)]))
    return RenewalProblem(PotentialFamily(eta, xi), 1.0, ForcingFamily.uniform(f))


@given(lattice_problems())
def test_fixed_point_matches_oracle_on_integer_grid(prob):
    sol = renewal_fixed_point(prob, RenewalGrid.span(0, 6, 1.0))
    assert sol.residual < 1e-12
    for i, t in enumerate(sol.t):
        for j, x in enumerate(prob.states):
            o = renewal_oracle(prob, t, tuple(x), 10)
            assert o.certificate == "support"
            assert sol.N[i, j] == pytest.approx(o.value, rel=1e-10, abs=1e-12)


@given(st.floats(0.1, 3.0), st.floats(0.0, 2.0))
def test_linear_in_forcing(c, lo):
    grid = RenewalGrid.span(0, 10, 1 / 16)
    f1 = Forcing.box(lo, lo + 1.5)
    f2 = Forcing.exp_step(0.3)
    a = renewal_fixed_point(problem([1.0, SQ2], f1), grid).tilted
    b = renewal_fixed_point(problem([1.0, SQ2], f2), grid).tilted
    both = Forcing.from_callable(lambda t: c * f1(t) + f2(t), (min(lo, 0.0), math.inf))
    ab = renewal_fixed_point(problem([1.0, SQ2], both), grid).tilted
    assert np.allclose(ab, c * a + b, atol=1e-12)


def test_golden_counts():
    prob = problem([1.0, 2.0], lattice=True)
    sol = renewal_fixed_point(prob, RenewalGrid.span(0, 8, 1.0))
    assert np.allclose(sol.N[:, 0], [1, 2, 4, 7, 12, 20, 33, 54, 88], rtol=1e-14)
    assert sol.method == "march" and sol.interpolation == "exact"
    assert renewal_oracle(prob, 3.0, (1,), 40).value == 7.0


def test_jacobi_path_for_short_delays():
    prob = problem([0.05, 1.0], eta_vals=[-1.0, -1.0])
    sol = renewal_fixed_point(prob, RenewalGrid.span(0, 5, 0.1))
    assert sol.method == "jacobi" and sol.residual < 1e-8


def test_lattice_requires_exact_grid():
    prob = problem([1.0, 2.0], lattice=True)
    with pytest.raises(PreconditionError):
        renewal_fixed_point(prob, RenewalGrid.span(0, 4, 0.3))


def test_oracle_word_cap():
    sh = TruncatedShift.full(3, word_cap=50)
    fam = PotentialFamily(constant(sh, -1.0), constant(sh, 1.0))
    prob = RenewalProblem(fam, 1.0, ForcingFamily.uniform(Forcing.step()))
    with pytest.raises(ResourceCapError):
        renewal_oracle(prob, 10.0, (1,), 10)


def test_nonlattice_constant_closed_form():
    prob = problem([1.0, SQ2])
    d = prob.delta
    assert math.exp(-d) + math.exp(-SQ2 * d) == pytest.approx(1.0, abs=1e-13)
    mean = math.exp(-d) + SQ2 * math.exp(-SQ2 * d)
    G = asymptotic_constant_nonlattice(prob).G
    assert G == pytest.approx(1 / (d * mean), rel=1e-10)
    assert np.allclose(cesaro_limit(prob), G)
    with pytest.raises(PreconditionError):
        asymptotic_constant_nonlattice(problem([1.0, 2.0], lattice=True))


def test_cesaro_average_converges():
    prob = problem([1.0, SQ2])
    sol = renewal_fixed_point(prob, RenewalGrid.span(0, 100, 1 / 32))
    assert np.allclose(cesaro_average(prob, sol, 100.0), cesaro_limit(prob), rtol=0.02)


def test_lattice_asymptote_periodic_and_close():
    prob = problem([1.0, 2.0], lattice=True)
    sol = renewal_fixed_point(prob, RenewalGrid.span(0, 40, 0.25))
    pred = asymptote_lattice(prob, sol.t)
    tail = sol.t >= 30
    assert np.abs(sol.tilted[tail] / pred.tilted[tail] - 1).max() < 1e-6
    shifted = asymptote_lattice(prob, sol.t + 1.0).G_tilde
    assert np.array_equal(shifted, pred.G_tilde)


def test_verify_lattice_with_coboundary():
    sh = TruncatedShift.full(2)
    words = sh.words_array(2)
    psi = np.array([0.3, -0.2])
    zeta = DepthPotential(sh, 2, np.where(words[:, 0] == 1, 1.0, 2.0))
    xi = DepthPotential(sh, 2, zeta.values + psi[words[:, 0] - 1] - psi[words[:, 1] - 1])
    assert verify_lattice(xi, LatticeStructure(zeta, psi, 1.0)).ok
    # a = 2 is not the maximal span
    assert not verify_lattice(xi, LatticeStructure(zeta, psi, 2.0)).ok
    assert not verify_lattice(xi, LatticeStructure(zeta, np.zeros(2), 1.0)).ok


def test_trivial_lattice_rejects_irrational():
    with pytest.raises(PreconditionError):
        trivial_lattice(letter_values(TruncatedShift.full(2), [1.0, SQ2]))


def test_conditions_pass_on_golden():
    prob = problem([1.0, 2.0], lattice=True)
    rep = check_conditions(prob, RenewalGrid.span(-2, 10, 0.5))
    assert rep.ok and rep.D.value == math.inf


def test_condition_b_fails_for_constant_forcing():
    two_sided = Forcing.from_callable(lambda t: np.ones_like(t), (-math.inf, math.inf))
    prob = problem([1.0, 2.0], forcing=two_sided)
    rep = check_conditions(prob, RenewalGrid.span(0, 4, 1.0))
    assert not rep.B.ok and "divergent" in rep.B.note
    with pytest.raises(PreconditionError, match="Condition"):
        cesaro_limit(prob)


def test_laplace_probe_hold_rule_is_exact_on_lattice():
    prob = problem([1.0, 2.0], lattice=True)
    sol = renewal_fixed_point(prob, RenewalGrid.span(0, 40, 1.0))
    pr = laplace_probe(prob, sol, [-0.1, -0.05 + 0.5j], rule="hold")
    assert np.allclose(pr.integral, pr.operator, rtol=1e-10)


def test_laplace_probe_limit_is_minus_u():
    prob = problem([1.0, SQ2])
    sol = renewal_fixed_point(prob, RenewalGrid.span(0, 150, 1 / 32))
    pr = laplace_probe(prob, sol, [-0.04, -0.02])
    assert np.allclose(pr.integral, pr.operator, rtol=0.02)
    assert np.allclose(pr.extrapolated, -pr.U, rtol=0.02)
    with pytest.raises(PreconditionError):
        laplace_probe(prob, sol, [0.1])
