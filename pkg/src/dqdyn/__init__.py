"""Discrete-time open qubit dynamics with frequency-conditional dephasing.

A qubit (photon polarization) is driven by a repeated pair of operations:
a local control unitary followed by a birefringent plate whose phase depends
on the photon's frequency. Averaging over the spectrum turns the exact
conditional unitaries into a non-Markovian reduced dynamics whose memory is
quantified by trace-distance revivals.
"""

from .environment import (
    FrequencyGrid,
    SpectralComponent,
    SpectralModel,
    build_grid,
    default_model,
)
from .protocol import (
    ControlSpec,
    PlateSpec,
    Protocol,
    Step,
    angle_from_eta,
    control_matrix,
    delta_l_from_thickness,
    eta_from_angle,
)
from .engine import (
    IntermediateMap,
    PhasePolynomial,
    Trajectory,
    evolve,
    evolve_lattice,
    evolve_quadrature,
    intermediate_map,
    phase_polynomial,
    superoperator_at,
)
from .measures import (
    DistanceSeries,
    DivisibilityReport,
    NmReport,
    PairOptimum,
    StepClass,
    blp_lower_bound,
    classify_divisibility,
    distance_series,
    optimize_pair,
    pair_memory,
)
from .search import ScheduleResult, optimize_schedule
from .qmath import DEFAULT_TOLS, Tolerances, trace_distance

__version__ = "0.1.0"

__all__ = [
    "FrequencyGrid",
    "SpectralComponent",
    "SpectralModel",
    "build_grid",
    "default_model",
    "ControlSpec",
    "PlateSpec",
    "Protocol",
    "Step",
    "angle_from_eta",
    "control_matrix",
    "delta_l_from_thickness",
    "eta_from_angle",
    "IntermediateMap",
    "PhasePolynomial",
    "Trajectory",
    "evolve",
    "evolve_lattice",
    "evolve_quadrature",
    "intermediate_map",
    "phase_polynomial",
    "superoperator_at",
    "DistanceSeries",
    "DivisibilityReport",
    "NmReport",
    "PairOptimum",
    "StepClass",
    "blp_lower_bound",
    "classify_divisibility",
    "distance_series",
    "optimize_pair",
    "pair_memory",
    "ScheduleResult",
    "optimize_schedule",
    "DEFAULT_TOLS",
    "Tolerances",
    "trace_distance",
    "__version__",
]
