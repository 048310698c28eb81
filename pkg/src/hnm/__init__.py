"""Qubit coupled to a chiral waveguide through a comb of delta points.

Exact single-excitation dynamics, a time-bin (collision) simulator with a
truncated photon number, multitime process tensors and a small CLI.
"""

from hnm.errors import (
    ConfigError,
    DimensionError,
    DomainError,
    HNMError,
    ResourceError,
    TruncationOverflow,
    WindowError,
)
from hnm.exact import amplitude, amplitude_segments, photon_wavefunction, survival_probability
from hnm.model import (
    EXCITED,
    GROUND,
    FormFactor,
    Instrument,
    KrausSet,
    ModelParams,
    comb,
    one_point,
    outcome_catalogue,
    pauli_interventions,
    two_point,
    validate_form_factor,
)
from hnm.process import (
    ProcessChoi,
    build_choi_analytic,
    build_choi_simulated,
    markov_factorization_distance,
    multitime_probability,
    reduced_channel,
    simulate_intervention_sequence,
)

__version__ = "0.1.0"
