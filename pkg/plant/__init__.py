from .dynamics import (
    PlantParams,
    JointState,
    mass_matrix,
    bias_terms,
    forward_dynamics,
    forward_dynamics_batch,
    rk4_step,
    rk4_step_batch,
    total_energy,
    potential_energy,
    wrap_angle,
)
from .simulator import PlantSimulator, SimulationTrace, SIM_DT, control_substeps

__all__ = [
    "PlantParams",
    "JointState",
    "mass_matrix",
    "bias_terms",
    "forward_dynamics",
    "forward_dynamics_batch",
    "rk4_step",
    "rk4_step_batch",
    "total_energy",
    "potential_energy",
    "wrap_angle",
    "PlantSimulator",
    "SimulationTrace",
    "SIM_DT",
    "control_substeps",
]
