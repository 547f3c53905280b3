"""Compositional symbolic models and safety controllers for networks of impulsive systems."""
from .abstraction import (AbstractionConfig, MonolithicModel, Quantizer, SymbolicModel, build_monolithic,
                          build_symbolic_subsystem, quantize_point, quantize_set)
from .certificates import (AsfCase, AsfKind, CertificateBundle, CertificateParams, ComposedAsf, LocalAsfParams,
                           check_dwell_time, derive_affine_certificate, derive_local_asf, precision_bound,
                           select_asf_case)
from .composition import ComposedModel, CompositionConfig, compose
from .errors import (ConstructionError, NoAsfCaseError, OutOfDomainError, SmallGainError, StructureError,
                     UnsafeRegionError)
from .gains import (GainMatrix, ScalingVector, SmallGainReport, build_gain_matrix, check_small_gain,
                    compose_parameters, compute_scalings)
from .model import (AffineDynamics, Box, ImpulsiveSubsystem, JumpTiming, NetworkModel, ring_network,
                    validate_network, warehouses)
from .runtime import monitor_relation, paired_run, run_closed_loop
from .synthesis import ConcretePolicy, SafeSet, SafetyController, refine_controller, synthesize

__version__ = "0.1.0"
