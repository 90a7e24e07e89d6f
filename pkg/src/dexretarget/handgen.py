"""Per-user customized robot hand: 45 actuated DoF from a shape vector.

The hand is assembled from a template (palm box, five three-segment fingers)
plus a linear basis that maps a 10-coefficient shape vector onto per-segment
bone-length offsets. Every anatomical joint is three stacked single-axis
revolute joints in x, y, z order, so the hand has 5 * 3 * 3 = 45 actuated
joints and one fingertip keypoint per finger.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError
from .kinematics import Inertial, Joint, Keypoint, KinematicTree, Link, build_tree
from .transforms import RigidTransform, quat_from_rpy

SHAPE_DIM = 10
FINGERS = ("thumb", "index", "middle", "ring", "pinky")
SEGMENTS_PER_FINGER = 3
NUM_BONES = len(FINGERS) * SEGMENTS_PER_FINGER
JOINT_LIMIT = 1.6  # rad, applied symmetrically to every stacked axis
BETA_CLAMP = 5.0
_AXES = (("x", np.array([1.0, 0.0, 0.0])), ("y", np.array([0.0, 1.0, 0.0])), ("z", np.array([0.0, 0.0, 1.0])))
_BONE_DENSITY = 1000.0  # kg/m^3, water-like soft tissue stand-in


@dataclass(frozen=True)
class HandShapeParams:
    """10 dimensionless shape coefficients, clamped to max-norm 5."""

    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != (SHAPE_DIM,):
            raise DataError(f"shape vector must have {SHAPE_DIM} coefficients")
        if not np.all(np.isfinite(beta)):
            raise DataError("shape vector contains non-finite values")
        beta = np.clip(beta, -BETA_CLAMP, BETA_CLAMP)
        beta.flags.writeable = False
        object.__setattr__(self, "beta", beta)

    @classmethod
    def zeros(cls) -> "HandShapeParams":
        return cls(np.zeros(SHAPE_DIM))


@dataclass(frozen=True)
class FingerSpec:
    base_xyz: np.ndarray
    base_rpy: np.ndarray
    lengths: np.ndarray  # 3 segment lengths, meters
    radii: np.ndarray    # 3 capsule radii, meters


@dataclass(frozen=True)
class HandTemplate:
    palm_box: np.ndarray                 # (x, y, z) size in meters
    fingers: dict[str, FingerSpec]       # keyed by FINGERS entries
    length_basis: np.ndarray             # (10, 15) beta -> bone-length offsets

    def __post_init__(self):
        palm = np.asarray(self.palm_box, dtype=float)
        if palm.shape != (3,) or np.any(palm <= 0):
            raise DataError("palm box needs 3 positive dimensions")
        object.__setattr__(self, "palm_box", palm)
        if tuple(self.fingers) != FINGERS:
            raise DataError(f"template must define fingers {FINGERS}")
        basis = np.asarray(self.length_basis, dtype=float)
        if basis.shape != (SHAPE_DIM, NUM_BONES):
            raise DataError(f"length basis must be {SHAPE_DIM}x{NUM_BONES}")
        object.__setattr__(self, "length_basis", basis)

        lengths = self.bone_lengths(HandShapeParams.zeros())
        if np.any(lengths <= 0):
            raise DataError("template bone lengths must be positive")
        for spec in self.fingers.values():
            if np.any(np.asarray(spec.radii) <= 0):
                raise DataError("capsule radii must be positive")
        # The clamp makes |beta| <= 5, so this guarantees positive lengths
        # for every admissible shape vector.
        worst = BETA_CLAMP * np.abs(basis).sum(axis=0)
        if np.any(worst >= lengths):
            raise DataError("length basis too large: a clamped shape could collapse a bone")

    def bone_lengths(self, shape: HandShapeParams) -> np.ndarray:
        """Per-segment lengths (finger-major order) for a shape vector."""
        base = np.concatenate([self.fingers[f].lengths for f in FINGERS])
        return base + shape.beta @ self.length_basis


def _template_from_document(doc: dict) -> HandTemplate:
    fingers = {}
    for name in FINGERS:
        raw = doc["fingers"][name]
        fingers[name] = FingerSpec(
            base_xyz=np.asarray(raw["base_xyz"], dtype=float),
            base_rpy=np.asarray(raw["base_rpy"], dtype=float),
            lengths=np.asarray(raw["lengths"], dtype=float),
            radii=np.asarray(raw["radii"], dtype=float),
        )
    return HandTemplate(
        palm_box=np.asarray(doc["palm_box"], dtype=float),
        fingers=fingers,
        length_basis=np.asarray(doc["length_basis"], dtype=float),
    )


def load_template(path: str | Path) -> HandTemplate:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read hand template: {exc}") from exc
    if doc.get("format") != "dexhand-template/1":
        raise DataError(f"unsupported template format {doc.get('format')!r}")
    return _template_from_document(doc)


def default_template() -> HandTemplate:
    """The shipped average-adult-male template (total length 0.193 m)."""
    ref = resources.files("dexretarget").joinpath("assets/hand_template.json")
    return load_template(Path(str(ref)))


def build_custom_hand(shape: HandShapeParams, template: HandTemplate | None = None,
                      name: str = "customized") -> KinematicTree:
    """Assemble the customized 45-DoF hand for one user.

    Topology never depends on the shape vector; only bone lengths do. The
    canonical joint order is finger-major (thumb..pinky), segment-major
    (proximal..distal), axis order x, y, z.
    """
    if template is None:
        template = default_template()
    lengths = template.bone_lengths(shape)

    palm = template.palm_box
    palm_mass = 0.2
    links = [Link("palm", None, RigidTransform())]
    joints: list[Joint] = []
    inertials = [
        Inertial(
            "palm",
            palm_mass,
            np.array([palm[0] / 2, 0.0, 0.0]),
            np.diag(
                [
                    palm_mass / 12 * (palm[1] ** 2 + palm[2] ** 2),
                    palm_mass / 12 * (palm[0] ** 2 + palm[2] ** 2),
                    palm_mass / 12 * (palm[0] ** 2 + palm[1] ** 2),
                ]
            ),
        )
    ]
    keypoints = []
    geometry = [{"link": "palm", "kind": "box", "size": [float(v) for v in palm]}]

    for fi, finger in enumerate(FINGERS):
        spec = template.fingers[finger]
        parent = "palm"
        origin_xyz = spec.base_xyz
        origin_rpy = tuple(float(v) for v in spec.base_rpy)
        for seg in range(SEGMENTS_PER_FINGER):
            length = float(lengths[fi * SEGMENTS_PER_FINGER + seg])
            radius = float(spec.radii[seg])
            for axis_name, axis in _AXES:
                lid = f"{finger}_{seg + 1}{axis_name}"
                if axis_name == "x":
                    origin = RigidTransform(quat_from_rpy(*origin_rpy), origin_xyz)
                    links.append(Link(lid, parent, origin, origin_rpy))
                else:
                    links.append(Link(lid, parent, RigidTransform(), (0.0, 0.0, 0.0)))
                joints.append(
                    Joint(lid, "revolute", axis, -JOINT_LIMIT, JOINT_LIMIT, 0.0)
                )
                parent = lid
            # The z link carries the bone; its frame x-axis runs along the bone.
            bone_mass = _BONE_DENSITY * np.pi * radius**2 * length
            inertials.append(
                Inertial(
                    parent,
                    bone_mass,
                    np.array([length / 2, 0.0, 0.0]),
                    np.diag(
                        [
                            0.5 * bone_mass * radius**2,
                            bone_mass * (3 * radius**2 + length**2) / 12,
                            bone_mass * (3 * radius**2 + length**2) / 12,
                        ]
                    ),
                )
            )
            geometry.append(
                {"link": parent, "kind": "capsule", "radius": radius, "length": length}
            )
            origin_xyz = np.array([length, 0.0, 0.0])
            origin_rpy = (0.0, 0.0, 0.0)
        keypoints.append(Keypoint(f"{finger}_tip", parent, origin_xyz.copy()))

    return build_tree(name, links, joints, inertials, keypoints, geometry)
