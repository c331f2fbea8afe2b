"""Decentralized interconnection-topology synthesis for networked linear systems."""

from .analysis import (Precision, PassivityIndices, check_dissipativity_centralized,
                       check_stability_centralized, eigen_stability_oracle,
                       estimate_passivity_indices, simulate_dissipation)
from .blockmat import (BlockMatrix, bew_transform, definiteness_oracle, inverse_bew,
                       is_network_matrix)
from .decomp import (CertificateArchive, ProtocolTrace, StepMessage, decompose_step,
                     extend_archive, schur_linearized_constraint, test_positive_definite)
from .dits import DitsInstance, compare_methods, synthesize_dits, wrap_subsystems
from .errors import (DiagnosticError, NetsynError, PreconditionError, StepInfeasible,
                     VerificationError)
from .generator import Target, generate, generate_system
from .synthesis import (Mode, SynthesisOptions, SynthesisResult, local_objective, synthesize,
                        synthesize_dissipativation, synthesize_dissipativity,
                        synthesize_stability, synthesize_stabilizability)
from .sysmodel import (CostModel, Designation, DesignSpec, NetworkedSystem, QsrSpec,
                       load_system, mark_refinable, save_system, to_dot)

__version__ = "0.1.0"
