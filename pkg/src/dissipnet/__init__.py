"""Data-driven decentralized controller synthesis for networks of unknown linear systems.

Each subsystem is made dissipative by a state-feedback gain computed from
noisy input/state data; the supply rates are chosen so that local
certificates imply stability of the interconnected network.
"""

from .errors import (ConditioningError, DissipnetError, InconsistentDataError, InvalidInputError,
                     PreconditionError, SingularMatrixError, SolverError, UnboundedDegreeError,
                     UnsupportedConfigurationError, WellPosednessError)
from .matqmi import QmiSet, dual_qmi, in_pi_class, inertia, qmi_contains, s_lemma_holds
from .dissip import (LinearSystem, SupplyRate, check_dissipativity, check_dissipativity_dual,
                     supply_matrix, verify_trajectory_dissipation)
from .datagen import (InterconnectionData, LocalData, NoiseBound, SubsystemModel, build_J,
                      build_lambda, build_theta_pair, collect_interconnection,
                      collect_network_data, sample_noise, simulate_collect_local)
from .network import (DiffusiveWeights, InterconnectionMatrix, Topology, assemble_closed_loop,
                      diffusive_interconnection, diffusive_stability_cert, global_stability_cert,
                      local_stability_cert)
from .synth import (SynthesisResult, algorithm1_node, algorithm2_node, check_inertia_condition,
                    degree_max, synth_local_dissipative)
from .sdp import SdpProblem, sdp_solve

__version__ = "0.1.0"
