"""DeepLight decoding and relevance analysis for block-design fMRI."""

from ._core import (
    STATES,
    ConfigError,
    InputError,
    Model,
    config_ini,
    detrend_standardize,
    f1,
    highpass,
    hrf,
    percentile,
    phantom_subject,
    read_vol1,
    smooth,
    threshold_fdr,
    threshold_percentile,
    write_vol1,
)

__all__ = [
    "STATES",
    "ConfigError",
    "InputError",
    "Model",
    "config_ini",
    "detrend_standardize",
    "f1",
    "highpass",
    "hrf",
    "percentile",
    "phantom_subject",
    "read_vol1",
    "smooth",
    "threshold_fdr",
    "threshold_percentile",
    "write_vol1",
]
