"""Multi-receiver slotted ALOHA: exact analysis and simulation.

A population of users feeds packets to K non-cooperative relays over a
slotted random-access channel with on-off fading; the relays forward what
they decode to a sink over a rate-limited TDMA downlink, either as random
linear combinations or through probabilistic store-or-drop policies.  The
package provides the closed-form performance expressions, the downlink
rate bounds and optimal forwarding policies, the finite-buffer analysis,
and a seeded Monte Carlo simulator that cross-validates all of it.
"""

__version__ = "0.1.0"

from .analytic import (FeasibilityReport, RateAllocation, SubsetSlack, SystemConfig,
                       check_rate_feasibility, max_downlink_throughput, omega,
                       peak_uplink_throughput, phi_subset, plr_uplink, throughput_sa,
                       throughput_uplink)
from .finitefield import (FieldMatrix, FieldSpec, default_modulus, field_add,
                          field_inv, field_mul, gauss_jordan, rank_pmf,
                          solved_variables)
from .markov import (CollectionState, TransitionProbs, joint_pmf,
                     rlc_finite_buffer_throughput, transition_probs)
from .montecarlo import (RlcDownlink, SfpDownlink, SimReport, SimSpec, run_rlc,
                         run_sfp, run_uplink, simulate_uplink_slot)
from .policies import (PolicyVector, SfpCoefficients, arrival_rate,
                       conjectured_optimum_channel_aware, numeric_optimize_sfp,
                       optimal_agnostic, optimal_interference_aware,
                       sfp_coefficients, slot_class, throughput_agnostic,
                       throughput_channel_aware, throughput_interference_aware)

__all__ = [name for name in dir() if not name.startswith("_")]
