"""Finite-mixture random measures: metrics, Lp norm estimation,
concentration-function bounds, and subsequence selection."""

__version__ = "0.1.0"

from .measures import DiscreteMeasure, d_metric, prohorov, quantile, symmetrize, truncated_moments
from .mixtures import NormalLaw, RandomMeasure, kp_condition_value, norm_constants
from .norms import NormEstimate, psi_exact, psi_mc
from .selection import SelectionConfig, SelectionResult, select_subsequence
from .seqmodel import DecaySchedule, SequenceModel

__all__ = [
    "DiscreteMeasure",
    "RandomMeasure",
    "NormalLaw",
    "NormEstimate",
    "SequenceModel",
    "DecaySchedule",
    "SelectionConfig",
    "SelectionResult",
    "d_metric",
    "prohorov",
    "quantile",
    "symmetrize",
    "truncated_moments",
    "kp_condition_value",
    "norm_constants",
    "psi_exact",
    "psi_mc",
    "select_subsequence",
    "__version__",
]
