"""Named flow constructions (pinching, Peano snake), scalar advection, tile
patching, and Lagrangian probes."""

from .advect import (AdvectionConfig, advect, lagrangian_probe, time_reparametrize,
                     count_components)
from .patch import PatchedField, patch_field
from .pinching import PinchingFlow
from .snake import SnakeSystem

__all__ = [
    "AdvectionConfig",
    "advect",
    "lagrangian_probe",
    "time_reparametrize",
    "count_components",
    "PatchedField",
    "patch_field",
    "PinchingFlow",
    "SnakeSystem",
]
