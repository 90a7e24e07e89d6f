"""Rigid-body inverse dynamics and trajectory-to-action computation.

Torques come from the recursive Newton-Euler algorithm over the tree, with
gravity folded in through a fictitious base acceleration and per-joint viscous
damping added when the description declares it. Action computation follows
the order: low-pass filter the joint trajectory, differentiate the filtered
signal, then evaluate inverse dynamics on it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import low_pass_trajectory
from .errors import DataError
from .kinematics import REVOLUTE, KinematicTree
from .transforms import axis_angle_matrix

GRAVITY = np.array([0.0, 0.0, -9.81])

TORQUE = "torque"
POSITION = "position"
BOTH = "both"


@dataclass(frozen=True)
class DynamicsInput:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.qd, dtype=float)
        qdd = np.asarray(self.qdd, dtype=float)
        g = np.asarray(self.gravity, dtype=float)
        if not (q.shape == qd.shape == qdd.shape):
            raise DataError("q, qd, qdd must have equal lengths")
        for arr, label in ((q, "q"), (qd, "qd"), (qdd, "qdd"), (g, "gravity")):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{label} contains non-finite values")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)
        object.__setattr__(self, "qdd", qdd)
        object.__setattr__(self, "gravity", g)


@dataclass(frozen=True)
class ActionFrame:
    timestamp: float
    torque: np.ndarray | None
    position_target: np.ndarray | None


def inverse_dynamics(tree: KinematicTree, inp: DynamicsInput) -> np.ndarray:
    """Joint torques (N*m) for the motion state via recursive Newton-Euler."""
    q = tree.check_q(inp.q)
    qd, qdd = inp.qd, inp.qdd
    n = len(tree.links)
    for link in tree.links:
        if link.id not in tree.inertials:
            raise DataError(f"link '{link.id}' has no inertial data")

    qi = {child: k for k, child in enumerate(tree.actuated_joints)}
    # child <- parent rotation and joint origin offset in the parent frame
    rot_cp = np.empty((n, 3, 3))
    off = tree._origin_trans
    w = np.empty((n, 3))
    wd = np.empty((n, 3))
    a = np.empty((n, 3))
    force = np.empty((n, 3))
    torque_l = np.empty((n, 3))

    for i in tree._topo:
        link = tree.links[i]
        joint = tree.joints.get(link.id)
        r_pc = tree._origin_rot[i]
        if joint is not None and joint.type == REVOLUTE:
            k = qi[link.id]
            r_pc = r_pc @ axis_angle_matrix(joint.axis, q[k])
            axis = joint.axis
            qd_k, qdd_k = qd[k], qdd[k]
        else:
            axis = None
            qd_k = qdd_k = 0.0
        rot_cp[i] = r_pc.T

        p = tree._parent_idx[i]
        if p < 0:
            w_par = np.zeros(3)
            wd_par = np.zeros(3)
            a_par = -inp.gravity  # gravity as base acceleration
        else:
            w_par, wd_par, a_par = w[p], wd[p], a[p]

        w_in = rot_cp[i] @ w_par
        a_in = rot_cp[i] @ (a_par + np.cross(wd_par, off[i]) + np.cross(w_par, np.cross(w_par, off[i])))
        if axis is not None:
            w[i] = w_in + qd_k * axis
            wd[i] = rot_cp[i] @ wd_par + qdd_k * axis + np.cross(w_in, qd_k * axis)
        else:
            w[i] = w_in
            wd[i] = rot_cp[i] @ wd_par
        a[i] = a_in

        inert = tree.inertials[link.id]
        a_com = a[i] + np.cross(wd[i], inert.com) + np.cross(w[i], np.cross(w[i], inert.com))
        force[i] = inert.mass * a_com
        torque_l[i] = inert.inertia @ wd[i] + np.cross(w[i], inert.inertia @ w[i])

    children: dict[int, list[int]] = {i: [] for i in range(n)}
    for i in range(n):
        p = tree._parent_idx[i]
        if p >= 0:
            children[p].append(i)

    f = np.zeros((n, 3))
    nt = np.zeros((n, 3))
    tau = np.zeros(tree.num_actuated)
    for i in reversed(tree._topo):
        link = tree.links[i]
        inert = tree.inertials[link.id]
        f[i] = force[i]
        nt[i] = torque_l[i] + np.cross(inert.com, force[i])
        for c in children[i]:
            fc = rot_cp[c].T @ f[c]
            f[i] += fc
            nt[i] += rot_cp[c].T @ nt[c] + np.cross(off[c], fc)
        joint = tree.joints.get(link.id)
        if joint is not None and joint.type == REVOLUTE:
            k = qi[link.id]
            tau[k] = joint.axis @ nt[i] + joint.damping * qd[k]
    return tau


def mass_matrix(tree: KinematicTree, q: np.ndarray) -> np.ndarray:
    """Joint-space inertia matrix assembled column-by-column from RNEA."""
    n = tree.num_actuated
    zeros = np.zeros(n)
    m = np.empty((n, n))
    for j in range(n):
        unit = np.zeros(n)
        unit[j] = 1.0
        m[:, j] = inverse_dynamics(tree, DynamicsInput(q, zeros, unit, gravity=np.zeros(3)))
    return m


def differentiate_trajectory(qtraj: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Velocities and accelerations of a uniformly sampled trajectory.

    Central differences at interior samples, second-order one-sided stencils
    at the ends (exact for quadratics everywhere).
    """
    q = np.asarray(qtraj, dtype=float)
    flat = q.ndim == 1
    if flat:
        q = q[:, None]
    if q.shape[0] < 3:
        raise DataError("trajectory differentiation needs at least 3 frames")
    if dt <= 0:
        raise DataError("dt must be positive")

    qd = np.empty_like(q)
    qd[1:-1] = (q[2:] - q[:-2]) / (2 * dt)
    qd[0] = (-3 * q[0] + 4 * q[1] - q[2]) / (2 * dt)
    qd[-1] = (3 * q[-1] - 4 * q[-2] + q[-3]) / (2 * dt)

    qdd = np.empty_like(q)
    qdd[1:-1] = (q[2:] - 2 * q[1:-1] + q[:-2]) / dt**2
    if q.shape[0] >= 4:
        qdd[0] = (2 * q[0] - 5 * q[1] + 4 * q[2] - q[3]) / dt**2
        qdd[-1] = (2 * q[-1] - 5 * q[-2] + 4 * q[-3] - q[-4]) / dt**2
    else:
        qdd[0] = qdd[1]
        qdd[-1] = qdd[1]
    if flat:
        return qd[:, 0], qdd[:, 0]
    return qd, qdd


def compute_actions(
    tree: KinematicTree,
    qtraj: np.ndarray,
    dt: float,
    gamma: float,
    mode: str = BOTH,
    gravity: np.ndarray = GRAVITY,
) -> list[ActionFrame]:
    """Filter, differentiate and evaluate inverse dynamics over a trajectory.

    Position targets are the filtered trajectory itself (the PD setpoints);
    torques come from RNEA on the filtered, differentiated signal.
    """
    if mode not in (TORQUE, POSITION, BOTH):
        raise DataError(f"unknown action mode '{mode}'")
    q = np.asarray(qtraj, dtype=float)
    if q.ndim != 2 or q.shape[1] != tree.num_actuated:
        raise DataError("trajectory must be (T, num_actuated)")
    filtered = low_pass_trajectory(q, gamma)

    torques = None
    if mode in (TORQUE, BOTH):
        qd, qdd = differentiate_trajectory(filtered, dt)
        torques = np.stack(
            [
                inverse_dynamics(tree, DynamicsInput(filtered[t], qd[t], qdd[t], gravity))
                for t in range(filtered.shape[0])
            ]
        )

    frames = []
    for t in range(filtered.shape[0]):
        frames.append(
            ActionFrame(
                timestamp=t * dt,
                torque=torques[t] if torques is not None else None,
                position_target=filtered[t].copy() if mode in (POSITION, BOTH) else None,
            )
        )
    return frames
