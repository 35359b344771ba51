from .controller import Controller, ControllerAssets, ControllerMode, controller_step, damping_controller
from .lqr import (
    LqrStabilizer,
    calibrate_roa,
    design_lqr,
    in_roa,
    linearize_at_goal,
    load_lqr,
    lqr_gain,
    save_lqr,
)

__all__ = [
    "Controller",
    "ControllerAssets",
    "ControllerMode",
    "controller_step",
    "damping_controller",
    "LqrStabilizer",
    "calibrate_roa",
    "design_lqr",
    "in_roa",
    "linearize_at_goal",
    "load_lqr",
    "lqr_gain",
    "save_lqr",
]
