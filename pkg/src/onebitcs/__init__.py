"""Adaptive-threshold one-bit compressed sensing."""

from .core import (RngSeed, SparseVector, gaussian_vector, hamming_distance, hard_threshold,
                   hard_threshold_normalized, magnitude_map, orthogonal_same_support, sign)
from .errors import (DegenerateInput, DomainError, FormatError, InfeasibleError, InvalidArgument,
                     NumericalError)
from .measure import MeasurementEnsemble, NoiseSpec, QuantizedRecord, make_ensemble, quantize
from .pipeline import (HtScheme, OrderOneScheme, PipelineConfig, SocpScheme, calibrated_q,
                       oversampling_factor, quantize_adaptive, recover_adaptive)
from .scheme_ht import HtSchemeConfig, direction_estimate, ht_recover, ht_thresholds
from .scheme_socp import SocpSchemeConfig, socp_recover, socp_thresholds
from .solver import SolverConfig, solve_l1_cone

__version__ = "0.1.0"
