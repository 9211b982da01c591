"""Python bindings for the teacher-training laboratory core.

The heavy lifting (autodiff, training, data generation) lives in the C++
core; this module exposes the numeric primitives that are useful to call
interactively: the modified-softmax head, the exact true-label
distribution, calibration metrics, the distillation loss, and the
error-bound surrogates.
"""

from sokdlab._core import (
    bound_terms,
    cr_weight,
    ece,
    fidelity,
    fit_temperature,
    kd_loss,
    lipschitz_bound,
    modified_softmax,
    nll,
    sample_dataset_summary,
    true_label_distribution,
)

__all__ = [
    "bound_terms",
    "cr_weight",
    "ece",
    "fidelity",
    "fit_temperature",
    "kd_loss",
    "lipschitz_bound",
    "modified_softmax",
    "nll",
    "sample_dataset_summary",
    "true_label_distribution",
]
