"""Risk-sensitive configuration pre-selection and per-query configuration matching."""

from .data import (
    ConfigurationDescriptor,
    EffectivenessMatrix,
    FeatureRecord,
    QueryFeatureVector,
    Qrels,
    RunEntry,
    RunList,
    load_descriptors,
    load_features,
    load_matrix,
    load_qrels,
    load_runs,
    save_matrix,
    save_runs,
)
from .errors import ContractError, FormatError, SQPError
from .selection import RiskParams, SelectedPool, select_configurations

__all__ = [
    "ConfigurationDescriptor",
    "ContractError",
    "EffectivenessMatrix",
    "FeatureRecord",
    "FormatError",
    "QueryFeatureVector",
    "Qrels",
    "RiskParams",
    "RunEntry",
    "RunList",
    "SQPError",
    "SelectedPool",
    "load_descriptors",
    "load_features",
    "load_matrix",
    "load_qrels",
    "load_runs",
    "save_matrix",
    "save_runs",
    "select_configurations",
]

__version__ = "0.1.0"
