import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmshift import (DiscreteDistribution, Forcing, PreconditionError, RenewalGrid,
                     embed_as_shift, key_asymptotics, renewal_fixed_point, renewal_measure,
                     renewal_oracle, solve_key_renewal)


@st.composite
def distributions(draw, lattice=True):
    n = draw(st.integers(1, 3))
    w = np.array(draw(st.lists(st.floats(0.1, 1.0), min_size=n, max_size=n)))
    if lattice:
        s = draw(st.lists(st.sampled_from([0.5, 1.0, 1.5, 2.0]), min_size=n, max_size=n))
    else:
        s = draw(st.lists(st.floats(0.3, 2.0), min_size=n, max_size=n))
    return DiscreteDistribution(tuple(w / w.sum()), tuple(s))


@given(distributions(lattice=False))
def test_renewal_measure_counts_mass(dist):
    # every renewal epoch below T is preceded by one whose next step jumps past T
    U = renewal_measure(dist, 10.0)
    assert U.mass_on(0, 0) == pytest.approx(1.0)
    assert U.masses.sum() == pytest.approx(1 + 10.0 / dist.mean, rel=0.5)


@given(distributions(lattice=False), st.sampled_from([Forcing.box(0, 1), Forcing.exp_step(1.0)]))
def test_solution_satisfies_equation(dist, z):
    sol = solve_key_renewal(dist, z, np.linspace(0, 15, 61))
    assert sol.residual < 1e-10


@given(distributions(lattice=True), st.sampled_from([Forcing.box(0, 1), Forcing.exp_step(0.7)]))
def test_shift_embedding_round_trip(dist, z):
    prob = embed_as_shift(dist, z)
    assert prob.delta == pytest.approx(0.0, abs=1e-12)
    sol = renewal_fixed_point(prob, RenewalGrid.span(0, 12, 0.5))
    direct = solve_key_renewal(dist, z, sol.t).Z
    assert np.allclose(sol.tilted, direct[:, None], atol=1e-10)


def test_nonlattice_round_trip_against_oracle():
    dist = DiscreteDistribution((0.5, 0.5), (1.0, math.sqrt(2)))
    z = Forcing.exp_step(1.0)
    prob = embed_as_shift(dist, z)
    for t in (1.7, 4.2):
        oracle = renewal_oracle(prob, t, (2,), 40)
        assert oracle.value == pytest.approx(solve_key_renewal(dist, z, [t]).Z[0], abs=1e-12)


def test_lattice_limit():
    dist = DiscreteDistribution((0.5, 0.5), (1.0, 2.0))
    z = Forcing.box(0.0, 1.0)
    sol = solve_key_renewal(dist, z, np.arange(0.0, 61.0))
    assert sol.Z[-1] == pytest.approx(2 / 3, abs=1e-12)
    asy = key_asymptotics(dist, sol, z)
    assert asy.lattice and asy.span == 1.0
    assert asy.gap < 1e-12 and asy.limit_i == pytest.approx(2 / 3)


def test_nonlattice_limit_trend():
    dist = DiscreteDistribution((0.5, 0.5), (1.0, math.sqrt(2)))
    z = Forcing.exp_step(1.0)
    sol = solve_key_renewal(dist, z, np.arange(0.0, 100.25, 0.25))
    asy = key_asymptotics(dist, sol, z)
    assert not asy.lattice
    assert asy.limit_i == pytest.approx(2 * (math.sqrt(2) - 1))
    assert asy.cesaro_gap < 0.02


def test_truncated_sequence():
    # geometric delays 1, 2, 3, ... with masses 2^-n
    masses = (0.5**n for n in range(1, 200))
    delays = (float(n) for n in range(1, 200))
    dist = DiscreteDistribution.from_sequence(masses, delays)
    assert 0 < dist.perturbation <= 1e-10
    assert sum(dist.p) == pytest.approx(1.0, abs=1e-14)
    assert embed_as_shift(dist, Forcing.box(0, 1)).shift.M == len(dist.p)
    coarse = DiscreteDistribution.from_sequence((0.5**n for n in range(1, 200)),
                                                (float(n) for n in range(1, 200)), tail_tol=1e-6)
    with pytest.raises(PreconditionError, match="tail"):
        embed_as_shift(coarse, Forcing.box(0, 1))
    with pytest.raises(PreconditionError, match="tail mass"):
        DiscreteDistribution.from_sequence([0.5, 0.25], [1.0, 2.0])


def test_validation():
    with pytest.raises(PreconditionError):
        DiscreteDistribution((0.5, 0.6), (1.0, 2.0))
    with pytest.raises(PreconditionError):
        DiscreteDistribution((1.0,), (0.0,))
    with pytest.raises(PreconditionError, match="left_pad"):
        solve_key_renewal(DiscreteDistribution((1.0,), (1.0,)),
                          Forcing.from_callable(lambda t: np.exp(-t * t)), [1.0])
