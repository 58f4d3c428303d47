"""Design workbench for a parabolic-mirror ion trap whose RF null sits at the mirror focus."""

__version__ = "0.1.0"

from .bem import BasisFieldSet, DomainError, Resolution, SolverError, field_at, potential_at, solve_basis
from .geometry import ElectrodeLayout, ParaboloidSpec, default_layout, voltage_vector
from .pseudo import IonSpecies, RfDrive, fit_secular, pseudo_at
from .saddle import SensitivityModel, find_rf_null, predict_saddle

__all__ = [
    "BasisFieldSet",
    "DomainError",
    "ElectrodeLayout",
    "IonSpecies",
    "ParaboloidSpec",
    "Resolution",
    "RfDrive",
    "SensitivityModel",
    "SolverError",
    "default_layout",
    "field_at",
    "find_rf_null",
    "fit_secular",
    "potential_at",
    "predict_saddle",
    "pseudo_at",
    "solve_basis",
    "voltage_vector",
]
