"""Delay-tolerant decentralized SGD simulator and bound calculators."""

from ._core import (
    BoundInputs,
    ConfigError,
    Topology,
    clipping_matrix,
    delay_compensated_gradient,
    effective_delta2,
    lemma1_bound,
    mask_matrix,
    predicting_matrix,
    preset_directory,
    pv_select,
    run,
    run_text,
    second_eigenvalue,
    theorem1_envelope,
    theorem1_Q,
    theorem2_envelope,
    theorem2_R,
)

__all__ = [
    "BoundInputs",
    "ConfigError",
    "Topology",
    "clipping_matrix",
    "delay_compensated_gradient",
    "effective_delta2",
    "lemma1_bound",
    "mask_matrix",
    "predicting_matrix",
    "preset_directory",
    "pv_select",
    "run",
    "run_text",
    "second_eigenvalue",
    "theorem1_envelope",
    "theorem1_Q",
    "theorem2_envelope",
    "theorem2_R",
]
