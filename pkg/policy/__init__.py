from .rbf_policy import (
    PolicyParams,
    apply_dropout,
    feature_map,
    init_policy,
    load_policy,
    policy_eval,
    policy_eval_batch,
    save_policy,
)
from .particle_optimizer import (
    InitialDistribution,
    OptimizationResult,
    ParticleBatch,
    optimize_policy,
    rollout_particles,
    sample_initial_particles,
    saturated_cost,
)

__all__ = [
    "PolicyParams",
    "apply_dropout",
    "feature_map",
    "init_policy",
    "load_policy",
    "policy_eval",
    "policy_eval_batch",
    "save_policy",
    "InitialDistribution",
    "OptimizationResult",
    "ParticleBatch",
    "optimize_policy",
    "rollout_particles",
    "sample_initial_particles",
    "saturated_cost",
]
