"""Python bindings for the kinet kinematics-informed predictors."""

from ._kinet import (
    acos_extended,
    analytic_ik,
    chassis_verdict,
    fk,
    generate_dataset,
    load_checkpoint,
    reach_annulus,
    selftest,
)

__all__ = [
    "acos_extended",
    "analytic_ik",
    "chassis_verdict",
    "fk",
    "generate_dataset",
    "load_checkpoint",
    "reach_annulus",
    "selftest",
]
