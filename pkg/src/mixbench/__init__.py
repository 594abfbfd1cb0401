"""mixbench: numerical laboratory for self-similar mixing by incompressible flows."""

__version__ = "0.1.0"

from ._accel import BACKEND as accel_backend  # noqa: F401
