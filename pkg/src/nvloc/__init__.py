"""Localization of near-surface NV centers from the field of a current-carrying wire."""

from .coupling import CouplingEstimate, ResonatorParams, coupling_constant, detection_time
from .errors import (
    DataFormatError,
    FitError,
    InversionError,
    NVLocError,
    QuadratureError,
    UnstableInversionError,
    ValidationError,
)
from .fitting import (
    NutationTrace,
    OdmrSpectrum,
    bperp_from_omega,
    bz_from_centers,
    extract_alpha_perp,
    extract_alpha_z,
    fit_four_gaussians,
    fit_sinusoid,
    linear_fit,
    synth_nutation,
    synth_odmr,
)
from .locator import (
    AlphaMeasurement,
    GeometryPrior,
    SearchDomain,
    array_statistics,
    bootstrap_positions,
    fit_position,
    position_pdf,
    summarize,
)
from .spin_model import (
    NVFrameField,
    SpinConstants,
    exact_transitions,
    nuclear_oscillation_frequency,
    secular_transitions,
    simulate_nutation_sequence,
)
from .wire_field import GridSpec, NVAxis, WireGeometry, alpha_map, field_magnitude_grid, wire_field

__version__ = "0.1.0"

__all__ = [
    "alpha_map",
    "AlphaMeasurement",
    "array_statistics",
    "bootstrap_positions",
    "bperp_from_omega",
    "bz_from_centers",
    "coupling_constant",
    "CouplingEstimate",
    "DataFormatError",
    "detection_time",
    "exact_transitions",
    "extract_alpha_perp",
    "extract_alpha_z",
    "field_magnitude_grid",
    "fit_four_gaussians",
    "fit_position",
    "fit_sinusoid",
    "FitError",
    "GeometryPrior",
    "GridSpec",
    "InversionError",
    "linear_fit",
    "nuclear_oscillation_frequency",
    "NutationTrace",
    "NVAxis",
    "NVFrameField",
    "NVLocError",
    "OdmrSpectrum",
    "position_pdf",
    "QuadratureError",
    "ResonatorParams",
    "SearchDomain",
    "secular_transitions",
    "simulate_nutation_sequence",
    "SpinConstants",
    "summarize",
    "synth_nutation",
    "synth_odmr",
    "UnstableInversionError",
    "ValidationError",
    "wire_field",
    "WireGeometry",
]
