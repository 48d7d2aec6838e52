"""Operating characteristics of trial analyses that borrow external controls."""

from ._extctl import (
    METHODS,
    AnalysisResult,
    ConfigError,
    DataError,
    GlmFit,
    NumericalError,
    analyze,
    fit_logistic,
    logistic,
    normal_upper_tail,
    resample,
    sandwich_covariance,
    simulate,
    synth_data,
)

__all__ = [
    "METHODS",
    "AnalysisResult",
    "ConfigError",
    "DataError",
    "GlmFit",
    "NumericalError",
    "analyze",
    "fit_logistic",
    "logistic",
    "normal_upper_tail",
    "resample",
    "sandwich_covariance",
    "simulate",
    "synth_data",
]
