"""Transfer operators, pressure and renewal theory on truncated countable Markov shifts."""

__version__ = "0.1.0"

from .errors import (CMShiftError, ConfigError, InadmissibleWordError, NearPoleError,
                     NonConvergenceError, PreconditionError, ResourceCapError)
from .forcing import Forcing, ForcingFamily
from .key_renewal import (DiscreteDistribution, embed_as_shift, key_asymptotics, renewal_measure,
                          solve_key_renewal)
from .potential import (DepthPotential, TailRule, birkhoff_sum, birkhoff_sums, constant,
                        depth_project, distortion_bound, from_weights, gauss_potential,
                        letter_values, normalize, power_potential, summability_constant)
from .renewal import (DecayParams, LatticeStructure, RenewalGrid, RenewalProblem,
                      asymptote_lattice, asymptotic_constant_nonlattice, cesaro_average,
                      cesaro_limit, check_conditions, laplace_probe, renewal_fixed_point,
                      renewal_oracle, trivial_lattice, verify_lattice)
from .resolvent import (PotentialFamily, lattice_periodicity_check, pole_probe, pressure_curve,
                        residue_formula, resolvent_apply, solve_delta)
from .shift import (Point, TruncatedShift, check_finitely_irreducible, enumerate_periodic_orbits,
                    enumerate_words, preimage_words)
from .transfer import (build_matrix, classify_a_function, complex_spectrum, integrate,
                       leading_eigendata, pressure_by_limit, rpf_convergence, verify_gibbs)
