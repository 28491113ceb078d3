"""Skin-tone fidelity benchmark pipeline.

Extract skin color from photographs (cheek geometry, masked clustering, and
their albedo-map variants), recolor a base texture toward the estimate, shade
it under spherical-harmonics lighting, and score the result with CIELAB
metrics and nonparametric statistics.
"""

from skinbench.colorimetry import (
    ItaClass,
    LabColor,
    LinearRgb,
    PerceptibilityBand,
    SrgbColor,
    delta_e,
    delta_e_band,
    ita_class,
    ita_degrees,
    lab_to_srgb,
    srgb_to_lab,
)
from skinbench.errors import (
    CascadeError,
    ExtractionError,
    ManifestError,
    RecolorError,
    ReportError,
    SkinbenchError,
)

__version__ = "0.1.0"

__all__ = [
    "CascadeError",
    "ExtractionError",
    "ItaClass",
    "LabColor",
    "LinearRgb",
    "ManifestError",
    "PerceptibilityBand",
    "RecolorError",
    "ReportError",
    "SkinbenchError",
    "SrgbColor",
    "delta_e",
    "delta_e_band",
    "ita_class",
    "ita_degrees",
    "lab_to_srgb",
    "srgb_to_lab",
    "__version__",
]
