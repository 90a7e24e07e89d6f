"""Hand-pose stream to robot demonstration toolkit.

Kinematic trees with forward kinematics and Jacobians, per-user customized
45-DoF hands, wrist solving, confidence-weighted PD control, keypoint
retargeting, Newton-Euler inverse dynamics, the end-to-end demonstration
pipeline, and a demo-augmented policy-gradient trainer on a toy task.
"""

from .errors import (
    DataError,
    DemoFormatError,
    DescriptionError,
    DexError,
    NumericalError,
    StreamFormatError,
)
from .transforms import RigidTransform

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "DemoFormatError",
    "DescriptionError",
    "DexError",
    "NumericalError",
    "RigidTransform",
    "StreamFormatError",
    "__version__",
]
