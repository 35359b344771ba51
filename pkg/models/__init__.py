from .gp_model import (
    GpDataset,
    GpModel,
    GpPosterior,
    build_model,
    HyperFitResult,
    KernelHyp,
    StatePrediction,
    fit_hyperparameters,
    log_marginal_likelihood,
    one_step_predict,
    posterior,
    posterior_batch,
    prior_mean,
    sample_next_state,
    se_kernel,
    subset_of_data,
)

__all__ = [
    "GpDataset",
    "GpModel",
    "GpPosterior",
    "build_model",
    "HyperFitResult",
    "KernelHyp",
    "StatePrediction",
    "fit_hyperparameters",
    "log_marginal_likelihood",
    "one_step_predict",
    "posterior",
    "posterior_batch",
    "prior_mean",
    "sample_next_state",
    "se_kernel",
    "subset_of_data",
]
