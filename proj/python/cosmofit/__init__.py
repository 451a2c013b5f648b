"""Python access to the cosmofit C++ core."""

from ._cosmofit import (
    Chains,
    CosmofitError,
    Model,
    Posterior,
    Priors,
    bridge_evidence,
    distance_modulus,
    ess,
    fit,
    hdi,
    hubble_rate,
    kde_density,
    luminosity_distance,
    parameter_names,
    parse_model,
    rhat,
    sample,
    shrinkage,
    summarize,
    waic,
)

__all__ = [
    "Chains",
    "CosmofitError",
    "Model",
    "Posterior",
    "Priors",
    "bridge_evidence",
    "distance_modulus",
    "ess",
    "fit",
    "hdi",
    "hubble_rate",
    "kde_density",
    "luminosity_distance",
    "parameter_names",
    "parse_model",
    "rhat",
    "sample",
    "shrinkage",
    "summarize",
    "waic",
]
