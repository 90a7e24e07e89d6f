"""Kinematic trees: description parsing, forward kinematics, Jacobians.

A tree is a rooted chain of links connected by revolute or fixed joints.
Each link carries a fixed origin transform expressed in its parent's frame;
a revolute joint then rotates the link about a unit axis given in the link's
own frame (right-handed, zero angle = description pose). Joint vectors are
plain float arrays ordered by the tree's canonical actuated ordering, which
is the order of appearance in the description's joint list.

Units are fixed globally: meters, radians, seconds, kilograms.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DescriptionError
from .transforms import RigidTransform, axis_angle_matrix, quat_from_rpy

_AXIS_TOL = 1e-9
_PSD_TOL = -1e-9

REVOLUTE = "revolute"
FIXED = "fixed"


@dataclass(frozen=True)
class Link:
    id: str
    parent: str | None
    origin: RigidTransform
    rpy: tuple[float, float, float] | None = None  # as written in the description


@dataclass(frozen=True)
class Joint:
    child_link: str
    type: str
    axis: np.ndarray | None
    lower: float
    upper: float
    damping: float


@dataclass(frozen=True)
class Inertial:
    link: str
    mass: float
    com: np.ndarray
    inertia: np.ndarray  # 3x3 about the COM, link frame


@dataclass(frozen=True)
class Keypoint:
    name: str
    link: str
    offset: np.ndarray


@dataclass(frozen=True)
class KinematicTree:
    """Immutable articulated chain; safe to share across threads."""

    name: str
    links: tuple[Link, ...]
    joints: dict[str, Joint]          # keyed by child link id
    inertials: dict[str, Inertial]
    keypoints: tuple[Keypoint, ...]
    geometry: tuple[dict, ...] = ()
    # Derived traversal caches, filled by _finalize.
    root: str = field(default="", repr=False)
    _index: dict[str, int] = field(default_factory=dict, repr=False)
    _topo: tuple[int, ...] = field(default=(), repr=False)
    _parent_idx: np.ndarray = field(default=None, repr=False)
    _origin_rot: np.ndarray = field(default=None, repr=False)
    _origin_trans: np.ndarray = field(default=None, repr=False)
    _actuated: tuple[str, ...] = field(default=(), repr=False)
    _joint_col: np.ndarray = field(default=None, repr=False)
    _joint_axes: np.ndarray = field(default=None, repr=False)
    _kp_paths: dict[str, tuple] = field(default_factory=dict, repr=False)

    @property
    def num_actuated(self) -> int:
        return len(self._actuated)

    @property
    def actuated_joints(self) -> tuple[str, ...]:
        """Child-link ids of the revolute joints, canonical order."""
        return self._actuated

    @property
    def keypoint_names(self) -> tuple[str, ...]:
        return tuple(k.name for k in self.keypoints)

    def joint_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lower = np.array([self.joints[c].lower for c in self._actuated])
        upper = np.array([self.joints[c].upper for c in self._actuated])
        return lower, upper

    def check_q(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.num_actuated,):
            raise DescriptionError(
                f"joint vector has shape {q.shape}, tree '{self.name}' has "
                f"{self.num_actuated} actuated joints"
            )
        if not np.all(np.isfinite(q)):
            raise DescriptionError("joint vector contains non-finite entries")
        return q


def _finalize(tree: KinematicTree) -> KinematicTree:
    """Validate all invariants and attach traversal caches."""
    index = {}
    for link in tree.links:
        if link.id in index:
            raise DescriptionError("duplicate link id", element=link.id)
        index[link.id] = len(index)

    roots = [l.id for l in tree.links if l.parent is None]
    if len(roots) != 1:
        raise DescriptionError(f"tree must have exactly one root link, found {roots}")
    root = roots[0]

    children: dict[str, list[str]] = {l.id: [] for l in tree.links}
    for link in tree.links:
        if link.parent is None:
            continue
        if link.parent not in index:
            raise DescriptionError("link references missing parent", element=link.id)
        children[link.parent].append(link.id)

    # Depth-first order from the root; anything unreached is a cycle or orphan.
    topo: list[int] = []
    stack = [root]
    while stack:
        lid = stack.pop()
        topo.append(index[lid])
        stack.extend(reversed(children[lid]))
    if len(topo) != len(tree.links):
        missing = sorted(set(index) - {tree.links[i].id for i in topo})
        raise DescriptionError("cycle in parent graph", element=missing[0])

    for link in tree.links:
        if link.parent is None:
            if link.id in tree.joints:
                raise DescriptionError("root link cannot have a joint", element=link.id)
            continue
        joint = tree.joints.get(link.id)
        if joint is None:
            raise DescriptionError("non-root link has no joint", element=link.id)
        if joint.type not in (REVOLUTE, FIXED):
            raise DescriptionError(f"unknown joint type '{joint.type}'", element=link.id)
        if joint.type == REVOLUTE:
            if joint.axis is None or abs(np.linalg.norm(joint.axis) - 1.0) > _AXIS_TOL:
                raise DescriptionError("joint axis is not unit length", element=link.id)
            if joint.lower > joint.upper:
                raise DescriptionError("joint limit lower > upper", element=link.id)
            if joint.damping < 0:
                raise DescriptionError("negative joint damping", element=link.id)

    for extra in set(tree.joints) - set(index):
        raise DescriptionError("joint references missing child link", element=extra)

    for inert in tree.inertials.values():
        if inert.link not in index:
            raise DescriptionError("inertial references missing link", element=inert.link)
        if inert.mass < 0 or not np.isfinite(inert.mass):
            raise DescriptionError("invalid mass", element=inert.link)
        if not np.allclose(inert.inertia, inert.inertia.T, atol=1e-12):
            raise DescriptionError("inertia tensor not symmetric", element=inert.link)
        eigs = np.linalg.eigvalsh(inert.inertia)
        if eigs.min() < _PSD_TOL:
            raise DescriptionError("inertia tensor not positive semi-definite", element=inert.link)

    seen = set()
    for kp in tree.keypoints:
        if kp.name in seen:
            raise DescriptionError("duplicate keypoint name", element=kp.name)
        seen.add(kp.name)
        if kp.link not in index:
            raise DescriptionError("keypoint references missing link", element=kp.name)

    n = len(tree.links)
    parent_idx = np.full(n, -1, dtype=int)
    origin_rot = np.zeros((n, 3, 3))
    origin_trans = np.zeros((n, 3))
    for i, link in enumerate(tree.links):
        if link.parent is not None:
            parent_idx[i] = index[link.parent]
        origin_rot[i] = link.origin.matrix()
        origin_trans[i] = link.origin.translation
    origin_rot.flags.writeable = False
    origin_trans.flags.writeable = False
    parent_idx.flags.writeable = False

    actuated = tuple(c for c, j in tree.joints.items() if j.type == REVOLUTE)

    # Flat per-link joint caches so FK avoids dict lookups in the hot loop.
    joint_col = np.full(n, -1, dtype=int)
    joint_axes = np.zeros((n, 3))
    for col, child in enumerate(actuated):
        i = index[child]
        joint_col[i] = col
        joint_axes[i] = tree.joints[child].axis
    joint_col.flags.writeable = False
    joint_axes.flags.writeable = False

    # Per-keypoint ancestor chains of revolute joints (link index, column).
    kp_paths = {}
    for kp in tree.keypoints:
        chain = []
        lid = kp.link
        while lid is not None:
            i = index[lid]
            if joint_col[i] >= 0:
                chain.append((i, int(joint_col[i])))
            lid = tree.links[i].parent
        kp_paths[kp.name] = tuple(chain)

    object.__setattr__(tree, "root", root)
    object.__setattr__(tree, "_index", index)
    object.__setattr__(tree, "_topo", tuple(topo))
    object.__setattr__(tree, "_parent_idx", parent_idx)
    object.__setattr__(tree, "_origin_rot", origin_rot)
    object.__setattr__(tree, "_origin_trans", origin_trans)
    object.__setattr__(tree, "_actuated", actuated)
    object.__setattr__(tree, "_joint_col", joint_col)
    object.__setattr__(tree, "_joint_axes", joint_axes)
    object.__setattr__(tree, "_kp_paths", kp_paths)
    return tree


def build_tree(
    name: str,
    links: list[Link],
    joints: list[Joint],
    inertials: list[Inertial] = (),
    keypoints: list[Keypoint] = (),
    geometry: list[dict] = (),
) -> KinematicTree:
    """Assemble and validate a tree from parts (joint order is canonical)."""
    joint_map: dict[str, Joint] = {}
    for j in joints:
        if j.child_link in joint_map:
            raise DescriptionError("link has multiple joints", element=j.child_link)
        joint_map[j.child_link] = j
    inert_map = {}
    for inert in inertials:
        if inert.link in inert_map:
            raise DescriptionError("link has multiple inertials", element=inert.link)
        inert_map[inert.link] = inert
    tree = KinematicTree(
        name=name,
        links=tuple(links),
        joints=joint_map,
        inertials=inert_map,
        keypoints=tuple(keypoints),
        geometry=tuple(geometry),
    )
    return _finalize(tree)


# ---------------------------------------------------------------------------
# Description document I/O
# ---------------------------------------------------------------------------

def _inertia_from_six(six) -> np.ndarray:
    ixx, ixy, ixz, iyy, iyz, izz = [float(v) for v in six]
    return np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])


def _vec(raw, length, what, element) -> np.ndarray:
    try:
        v = np.asarray([float(x) for x in raw], dtype=float)
    except (TypeError, ValueError) as exc:
        raise DescriptionError(f"malformed {what}", element=element) from exc
    if v.shape != (length,) or not np.all(np.isfinite(v)):
        raise DescriptionError(f"{what} must be {length} finite numbers", element=element)
    return v


def load_robot(source: str | Path | dict) -> KinematicTree:
    """Load and validate a robot description (path, JSON text, or dict)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            text = Path(source).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DescriptionError(f"robot description is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DescriptionError("robot description must be a JSON object")

    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise DescriptionError("missing robot name")

    links = []
    for raw in doc.get("links", []):
        lid = raw.get("id")
        if not lid:
            raise DescriptionError("link without id")
        parent = raw.get("parent")
        xyz = _vec(raw.get("origin_xyz", (0, 0, 0)), 3, "origin_xyz", lid)
        rpy = _vec(raw.get("origin_rpy", (0, 0, 0)), 3, "origin_rpy", lid)
        links.append(
            Link(lid, parent or None, RigidTransform(quat_from_rpy(*rpy), xyz), tuple(float(v) for v in rpy))
        )
    if not links:
        raise DescriptionError("robot description has no links")

    joints = []
    for raw in doc.get("joints", []):
        child = raw.get("child_link")
        if not child:
            raise DescriptionError("joint without child_link")
        jtype = raw.get("type", REVOLUTE)
        axis = None
        if jtype == REVOLUTE:
            axis = _vec(raw.get("axis", (0, 0, 1)), 3, "axis", child)
        joints.append(
            Joint(
                child_link=child,
                type=jtype,
                axis=axis,
                lower=float(raw.get("limit_lower", 0.0)),
                upper=float(raw.get("limit_upper", 0.0)),
                damping=float(raw.get("damping", 0.0)),
            )
        )

    inertials = []
    for raw in doc.get("inertials", []):
        link = raw.get("link")
        if not link:
            raise DescriptionError("inertial without link")
        six = raw.get("inertia_6", (0, 0, 0, 0, 0, 0))
        if len(six) != 6:
            raise DescriptionError("inertia_6 must have 6 entries", element=link)
        inertials.append(
            Inertial(
                link=link,
                mass=float(raw.get("mass", 0.0)),
                com=_vec(raw.get("com", (0, 0, 0)), 3, "com", link),
                inertia=_inertia_from_six(six),
            )
        )

    keypoints = []
    for raw in doc.get("keypoints", []):
        kname = raw.get("name")
        if not kname:
            raise DescriptionError("keypoint without name")
        keypoints.append(
            Keypoint(name=kname, link=raw.get("link", ""), offset=_vec(raw.get("offset", (0, 0, 0)), 3, "offset", kname))
        )

    geometry = tuple(dict(g) for g in doc.get("geometry", []))
    return build_tree(name, links, joints, inertials, keypoints, geometry)


def tree_to_document(tree: KinematicTree) -> dict:
    """Inverse of load_robot; field order is fixed for canonical output."""
    def rpy_of(origin: RigidTransform) -> list[float]:
        # Fixed-axis XYZ angles recovered from the rotation matrix.
        m = origin.matrix()
        pitch = np.arcsin(np.clip(-m[2, 0], -1.0, 1.0))
        if abs(m[2, 0]) < 1.0 - 1e-12:
            roll = np.arctan2(m[2, 1], m[2, 2])
            yaw = np.arctan2(m[1, 0], m[0, 0])
        else:  # gimbal lock: fold everything into roll
            roll = np.arctan2(-m[1, 2], m[1, 1])
            yaw = 0.0
        return [float(roll), float(pitch), float(yaw)]

    doc = {
        "name": tree.name,
        "links": [
            {
                "id": l.id,
                "parent": l.parent,
                "origin_xyz": [float(v) for v in l.origin.translation],
                "origin_rpy": list(l.rpy) if l.rpy is not None else rpy_of(l.origin),
            }
            for l in tree.links
        ],
        "joints": [],
        "inertials": [
            {
                "link": i.link,
                "mass": float(i.mass),
                "com": [float(v) for v in i.com],
                "inertia_6": [
                    float(i.inertia[0, 0]),
                    float(i.inertia[0, 1]),
                    float(i.inertia[0, 2]),
                    float(i.inertia[1, 1]),
                    float(i.inertia[1, 2]),
                    float(i.inertia[2, 2]),
                ],
            }
            for i in tree.inertials.values()
        ],
        "keypoints": [
            {"name": k.name, "link": k.link, "offset": [float(v) for v in k.offset]}
            for k in tree.keypoints
        ],
    }
    for j in tree.joints.values():
        entry = {"child_link": j.child_link, "type": j.type}
        if j.type == REVOLUTE:
            entry["axis"] = [float(v) for v in j.axis]
            entry["limit_lower"] = float(j.lower)
            entry["limit_upper"] = float(j.upper)
            entry["damping"] = float(j.damping)
        doc["joints"].append(entry)
    if tree.geometry:
        doc["geometry"] = [dict(g) for g in tree.geometry]
    return doc


def dump_robot(tree: KinematicTree) -> str:
    return json.dumps(tree_to_document(tree), indent=2) + "\n"


def write_robot(tree: KinematicTree, path: str | Path):
    Path(path).write_text(dump_robot(tree))


# ---------------------------------------------------------------------------
# Forward kinematics and Jacobians
# ---------------------------------------------------------------------------

def link_poses(tree: KinematicTree, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World rotation (n,3,3) and origin position (n,3) of every link."""
    q = tree.check_q(q)
    n = len(tree.links)
    rot = np.empty((n, 3, 3))
    pos = np.empty((n, 3))
    parent = tree._parent_idx
    cols = tree._joint_col
    for i in tree._topo:
        p = parent[i]
        if p < 0:
            r = tree._origin_rot[i]
            t = tree._origin_trans[i]
        else:
            r = rot[p] @ tree._origin_rot[i]
            t = rot[p] @ tree._origin_trans[i] + pos[p]
        col = cols[i]
        if col >= 0:
            r = r @ axis_angle_matrix(tree._joint_axes[i], q[col])
        rot[i] = r
        pos[i] = t
    return rot, pos


def forward_kinematics(tree: KinematicTree, q: np.ndarray) -> dict[str, np.ndarray]:
    """Positions of all keypoints in the root frame, keyed by name."""
    rot, pos = link_poses(tree, q)
    out = {}
    for kp in tree.keypoints:
        i = tree._index[kp.link]
        out[kp.name] = rot[i] @ kp.offset + pos[i]
    return out


def _keypoint_index(tree: KinematicTree, name: str) -> Keypoint:
    for kp in tree.keypoints:
        if kp.name == name:
            return kp
    raise DescriptionError("unknown keypoint", element=name)


def keypoint_jacobians(
    tree: KinematicTree, q: np.ndarray, names: list[str] | tuple[str, ...]
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Positions and 3xN analytic Jacobians for several keypoints at once.

    Column j of a Jacobian is d(position)/d(q_j); joints off the root-to-
    keypoint path contribute zero columns.
    """
    kps = [_keypoint_index(tree, name) for name in names]
    rot, pos = link_poses(tree, q)
    nq = tree.num_actuated

    positions = {}
    jacobians = {}
    for kp in kps:
        i = tree._index[kp.link]
        point = rot[i] @ kp.offset + pos[i]
        jac = np.zeros((3, nq))
        for li, col in tree._kp_paths[kp.name]:
            axis_world = rot[li] @ tree._joint_axes[li]
            jac[:, col] = np.cross(axis_world, point - pos[li])
        positions[kp.name] = point
        jacobians[kp.name] = jac
    return positions, jacobians


def keypoint_jacobian(tree: KinematicTree, q: np.ndarray, name: str) -> np.ndarray:
    """3xN Jacobian of one keypoint's position with respect to q."""
    _, jacs = keypoint_jacobians(tree, q, (name,))
    return jacs[name]
