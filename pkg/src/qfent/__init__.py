"""qfent — exact entanglement dynamics for gapless detector pairs and
triples coupled to a relativistic scalar field.

The package computes closed-form reduced density matrices for N static
two-level systems with zero energy gap, linearly coupled through Gaussian
smearing profiles to a real scalar field of mass m̃ in n spatial
dimensions, and maps the entanglement (negativity, π-tangle) they acquire.
All quantities are dimensionless, measured in units of the smearing width.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    IntegrandDomainError,
    ModelConsistencyError,
    NumericalError,
    PartialGridError,
    QfentError,
    QuadratureAccuracyError,
)
from .kernels import (
    DEFAULT_REL_TOL,
    DetectorParams,
    Divergent,
    KernelCache,
    KernelSet,
    ModelParams,
    Unbounded,
    decay_exponent,
    equilateral_params,
    ground_state_energy,
    kernel_set,
    pair_params,
    r_alpha,
    single_params,
    vartheta,
    xi,
)
from .dmatrix import (
    DensityMatrix,
    basis_labels,
    build_bipartite,
    build_general,
    build_tripartite_equilateral,
    permute_basis,
)
from .entangle import (
    EntanglementReport,
    negativity,
    partial_trace,
    partial_transpose,
    pi_tangle,
)
from .sweep import (
    ConeContour,
    MapConfig,
    SliceResult,
    SweepGrid,
    extract_cone,
    linear_axis,
    log_axis,
    run_bipartite_map,
    run_slice,
    run_tripartite_map,
)
from .cli_io import RunConfig, parse_config

__all__ = [
    "__version__",
    # errors
    "ConfigError",
    "IntegrandDomainError",
    "ModelConsistencyError",
    "NumericalError",
    "PartialGridError",
    "QfentError",
    "QuadratureAccuracyError",
    # kernels
    "DEFAULT_REL_TOL",
    "DetectorParams",
    "Divergent",
    "KernelCache",
    "KernelSet",
    "ModelParams",
    "Unbounded",
    "decay_exponent",
    "equilateral_params",
    "ground_state_energy",
    "kernel_set",
    "pair_params",
    "r_alpha",
    "single_params",
    "vartheta",
    "xi",
    # density matrices
    "DensityMatrix",
    "basis_labels",
    "build_bipartite",
    "build_general",
    "build_tripartite_equilateral",
    "permute_basis",
    # entanglement
    "EntanglementReport",
    "negativity",
    "partial_trace",
    "partial_transpose",
    "pi_tangle",
    # sweeps
    "ConeContour",
    "MapConfig",
    "SliceResult",
    "SweepGrid",
    "extract_cone",
    "linear_axis",
    "log_axis",
    "run_bipartite_map",
    "run_slice",
    "run_tripartite_map",
    # CLI / config
    "RunConfig",
    "parse_config",
]
