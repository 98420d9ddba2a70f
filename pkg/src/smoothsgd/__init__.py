"""Smoothed online SGD for Gaussian single-index models.

Learns y = link(w* . x) for x ~ N(0, I_d) and unit w* by online gradient
steps on the unit sphere, using a sphere-smoothed correlation loss whose
per-sample value and gradient are evaluated in closed form.  Includes the
sample-complexity sweep harness, validation oracles for every closed-form
identity, and a companion spiked tensor-PCA recovery module.
"""

from .hermite import (
    DegenerateLinkError,
    LinkFunction,
    he_eval,
    he_monomial_coeffs,
    hermite_expand,
    hermite_tensor_batch,
    hermite_tensor_dense,
    information_exponent,
    link_from_coeffs,
    normalized_hermite_link,
)
from .sphere import (
    nu_moment,
    project_perp,
    retract,
    sample_perp,
    sample_sphere,
    stein_check,
)
from .smoothing import (
    SampleGradient,
    SmoothedModel,
    population_grad_coeff,
    population_loss,
    s_k_value,
    smooth_alpha_power,
    smooth_alpha_power_dalpha,
    smooth_univariate,
    smoothed_hermite_tensor,
    smoothed_sample_gradient,
    smoothed_sample_value,
)
from .sgd import (
    SgdSchedule,
    SnrProbe,
    TrialRecord,
    aligned_start,
    default_schedule,
    run_stage1,
    run_stage2,
    snr_probe,
)
from .tensors import (
    SymmetricTensor,
    empirical_hermite_tensor,
    make_spiked_tensor,
    partial_trace,
    power_iteration,
    rank_one,
    recover_spike,
    symmetrize,
    tensor_apply,
)
from .harness import (
    CSV_HEADER,
    CellStats,
    PowerLawFit,
    SweepConfig,
    aggregate_cells,
    emit_plot_data,
    fit_cells,
    fit_power_law,
    load_config,
    parse_config,
    read_plot_data,
    refit_from_csv,
    run_sweep,
    run_trial,
    sweep_and_emit,
    trial_seed,
)
from .estimator import SingleIndexRegressor

__version__ = "0.1.0"

__all__ = [
    "CSV_HEADER",
    "CellStats",
    "DegenerateLinkError",
    "LinkFunction",
    "PowerLawFit",
    "SampleGradient",
    "SgdSchedule",
    "SingleIndexRegressor",
    "SmoothedModel",
    "SnrProbe",
    "SweepConfig",
    "SymmetricTensor",
    "TrialRecord",
    "aggregate_cells",
    "aligned_start",
    "default_schedule",
    "emit_plot_data",
    "empirical_hermite_tensor",
    "fit_cells",
    "fit_power_law",
    "he_eval",
    "he_monomial_coeffs",
    "hermite_expand",
    "hermite_tensor_batch",
    "hermite_tensor_dense",
    "information_exponent",
    "link_from_coeffs",
    "load_config",
    "make_spiked_tensor",
    "normalized_hermite_link",
    "nu_moment",
    "parse_config",
    "partial_trace",
    "population_grad_coeff",
    "population_loss",
    "power_iteration",
    "project_perp",
    "rank_one",
    "read_plot_data",
    "recover_spike",
    "refit_from_csv",
    "retract",
    "run_stage1",
    "run_stage2",
    "run_sweep",
    "run_trial",
    "s_k_value",
    "sample_perp",
    "sample_sphere",
    "smooth_alpha_power",
    "smooth_alpha_power_dalpha",
    "smooth_univariate",
    "smoothed_hermite_tensor",
    "smoothed_sample_gradient",
    "smoothed_sample_value",
    "snr_probe",
    "stein_check",
    "sweep_and_emit",
    "symmetrize",
    "tensor_apply",
    "trial_seed",
]
