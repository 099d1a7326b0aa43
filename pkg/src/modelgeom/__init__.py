"""Parabolicity, stochastic completeness, Green mass and mean exit times on
rotationally symmetric model manifolds."""

from .criteria import (classification_report, classify_l1, classify_parabolic, classify_stochastic,
                       exit_time_ball, global_exit_time, green_kernel, tonelli_check)
from .quad import IntegralVerdict, QuadratureConfig, classify_improper
from .warp import ModelManifold, Tabulated, make_family

__version__ = "0.1.0"

__all__ = [
    "ModelManifold", "Tabulated", "make_family", "QuadratureConfig", "IntegralVerdict",
    "classify_improper", "classification_report", "classify_parabolic", "classify_stochastic",
    "classify_l1", "green_kernel", "tonelli_check", "exit_time_ball", "global_exit_time",
]
