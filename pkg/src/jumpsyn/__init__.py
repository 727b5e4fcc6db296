"""Mixed H2/Hinf state-feedback synthesis for Markov jump linear systems
with time-varying state delay and exponentially delayed mode observation."""

from .augmentation import (AugmentedModel, build_augmented_generator, build_augmented_model,
                           mode_pair, mode_pair_index)
from .errors import (CertificateInvalid, DimensionMismatch, GeneratorInvalid, IndexOutOfRange,
                     Infeasible, JumpsynError, NonFinite, ParseError, RangeError, Reducible,
                     SolverFailure, StepTooLarge)
from .model import (DelaySpec, InitialHistory, MjlsModel, ObservationModel, PerformanceSpec, Scenario,
                    SimSettings, validate_model)
from .scenario import load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "AugmentedModel", "CertificateInvalid", "DelaySpec", "DimensionMismatch", "GeneratorInvalid",
    "IndexOutOfRange", "Infeasible", "InitialHistory", "JumpsynError", "MjlsModel", "NonFinite",
    "ObservationModel", "ParseError", "PerformanceSpec", "RangeError", "Reducible", "Scenario",
    "SimSettings", "SolverFailure", "StepTooLarge", "build_augmented_generator", "build_augmented_model",
    "load_scenario", "mode_pair", "mode_pair_index", "save_scenario", "validate_model",
]
