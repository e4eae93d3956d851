"""Serial-arm model with standard DH parameters.

Link transform ``i``: ``Rz(q_i + offset_i) Tz(d_i) Tx(a_i) Rx(alpha_i)``.
Frame 0 is the base; frame ``i`` follows joint ``i``. Body points are given in
the coordinates of the frame they are rigidly attached to.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import se3
from .exceptions import JointLimit, ShapeMismatch, ValidationFailure

logger = logging.getLogger(__name__)

LIMIT_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class ArmModel:
    name: str
    dh: np.ndarray            # (d, 4): a, alpha, d, theta_offset
    lower: np.ndarray         # (d,)
    upper: np.ndarray         # (d,)
    point_links: np.ndarray   # (P,) frame index in 0..d
    point_local: np.ndarray   # (P, 3)
    point_radii: np.ndarray   # (P,)
    tool: se3.Pose = se3.Pose()

    def __post_init__(self):
        if np.any(self.lower >= self.upper):
            raise ValidationFailure('joint limits need lower < upper', field_path='limits')
        if np.any(self.point_radii <= 0.0):
            raise ValidationFailure('body point radii must be positive', field_path='body_points')
        if np.any((self.point_links < 0) | (self.point_links > self.dof)):
            raise ValidationFailure('body point link index out of range', field_path='body_points')

    @property
    def dof(self):
        return len(self.dh)

    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    def sample_configurations(self, rng, count):
        return rng.uniform(self.lower, self.upper, size=(count, self.dof))

    @classmethod
    def from_dict(cls, payload):
        from .serializers import ArmConfigSerializer, load_payload

        data = load_payload(ArmConfigSerializer, payload)
        joints = data['joints']
        points = data['body_points']
        return cls(
            name=data['name'],
            dh=np.array([[j['a'], j['alpha'], j['d'], j['theta_offset']] for j in joints]),
            lower=np.array([j['lower'] for j in joints]),
            upper=np.array([j['upper'] for j in joints]),
            point_links=np.array([p['link'] for p in points], dtype=int),
            point_local=np.array([p['position'] for p in points], dtype=float).reshape(-1, 3),
            point_radii=np.array([p['radius'] for p in points], dtype=float),
            tool=se3.Pose.from_array7(data['tool']),
        )

    def to_dict(self):
        return {
            'name': self.name,
            'joints': [
                {'a': a, 'alpha': alpha, 'd': d, 'theta_offset': off, 'lower': lo, 'upper': hi}
                for (a, alpha, d, off), lo, hi in zip(self.dh.tolist(), self.lower.tolist(), self.upper.tolist())
            ],
            'body_points': [
                {'link': int(link), 'position': pos, 'radius': r}
                for link, pos, r in zip(self.point_links, self.point_local.tolist(), self.point_radii.tolist())
            ],
            'tool': self.tool.to_array7().tolist(),
        }


def load_arm(path):
    with open(path) as handle:
        return ArmModel.from_dict(json.load(handle))


def default_arm():
    from .conf import default_arm_file

    return load_arm(Path(default_arm_file()))


@dataclass(frozen=True, eq=False)
class JointTrajectory:
    states: np.ndarray   # (T + 1, d)

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        if states.ndim != 2:
            raise ShapeMismatch(f'trajectory states must be (T + 1, d), got {states.shape}')
        states.setflags(write=False)
        object.__setattr__(self, 'states', states)

    @property
    def horizon(self):
        return len(self.states) - 1

    def to_list(self):
        return self.states.tolist()


def check_limits(arm, q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != arm.dof:
        raise ShapeMismatch(f'expected {arm.dof} joints, got {q.shape[-1]}')
    low = q < arm.lower - LIMIT_TOLERANCE
    high = q > arm.upper + LIMIT_TOLERANCE
    if np.any(low | high):
        joint = int(np.argwhere(low | high)[0][-1])
        raise JointLimit(f'joint {joint} outside [{arm.lower[joint]}, {arm.upper[joint]}]', joint=joint)
    return q


def dh_transforms(arm, q):
    """Per-joint link transforms, ``(N, d, 4, 4)`` for ``(N, d)`` configurations."""
    q = np.atleast_2d(q)
    a, alpha, d, offset = arm.dh.T
    theta = q + offset
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    transforms = np.zeros(q.shape + (4, 4))
    transforms[..., 0, 0] = ct
    transforms[..., 0, 1] = -st * ca
    transforms[..., 0, 2] = st * sa
    transforms[..., 0, 3] = a * ct
    transforms[..., 1, 0] = st
    transforms[..., 1, 1] = ct * ca
    transforms[..., 1, 2] = -ct * sa
    transforms[..., 1, 3] = a * st
    transforms[..., 2, 1] = sa
    transforms[..., 2, 2] = ca
    transforms[..., 2, 3] = d
    transforms[..., 3, 3] = 1.0
    return transforms


def frames(arm, q):
    """Cumulative frames ``(N, d + 1, 4, 4)``: base, then after each joint."""
    links = dh_transforms(arm, q)
    n = links.shape[0]
    out = np.empty((n, arm.dof + 1, 4, 4))
    out[:, 0] = np.eye(4)
    for j in range(arm.dof):
        out[:, j + 1] = out[:, j] @ links[:, j]
    return out


def ee_matrices(arm, q, cumulative=None):
    """End-effector transforms ``(N, 4, 4)``, tool transform included; no limit check."""
    cumulative = frames(arm, q) if cumulative is None else cumulative
    return cumulative[:, -1] @ arm.tool.as_matrix()


def fk(arm, q):
    """End-effector pose ``r(q)``."""
    q = check_limits(arm, q)
    return se3.Pose.from_matrix(ee_matrices(arm, q[None])[0])


def body_point_positions(arm, q, cumulative=None):
    """World body points ``(N, P, 3)``; no limit check."""
    cumulative = frames(arm, q) if cumulative is None else cumulative
    link_frames = cumulative[:, arm.point_links]          # (N, P, 4, 4)
    rotated = np.einsum('npij,pj->npi', link_frames[..., :3, :3], arm.point_local)
    return rotated + link_frames[..., :3, 3]


def body_points(arm, q):
    """List of ``(position, radius)`` pairs for one configuration."""
    q = check_limits(arm, q)
    positions = body_point_positions(arm, q[None])[0]
    return list(zip(positions, arm.point_radii))


def clamp_to_limits(arm, traj):
    states = np.clip(traj.states, arm.lower, arm.upper)
    return JointTrajectory(states)


def joint_axes(cumulative):
    """World joint axes and origins: joint ``j`` turns about z of frame ``j - 1``.

    Returns ``(axes, origins)``, each ``(N, d, 3)``.
    """
    return cumulative[:, :-1, :3, 2], cumulative[:, :-1, :3, 3]


def point_jacobians(arm, points, cumulative, links):
    """Geometric Jacobians of world points attached to frame ``links``.

    ``points`` is ``(N, P, 3)``; returns ``(N, P, 3, d)`` where column ``j`` is
    ``z_j x (p - o_j)`` for joints upstream of the point's frame.
    """
    axes, origins = joint_axes(cumulative)
    diff = points[:, :, None, :] - origins[:, None, :, :]          # (N, P, d, 3)
    cols = np.cross(np.broadcast_to(axes[:, None], diff.shape), diff)
    mask = np.arange(arm.dof)[None, :] < np.asarray(links)[:, None]  # (P, d)
    cols = cols * mask[None, :, :, None]
    return np.swapaxes(cols, -1, -2)


def pose_errors(targets, current):
    """World-frame ``(N, 6)`` error: translation difference, then ``log(R_target R^T)``."""
    rotation = targets[:, :3, :3] @ np.swapaxes(current[:, :3, :3], -1, -2)
    return np.concatenate([
        targets[:, :3, 3] - current[:, :3, 3],
        se3.rotvecs_from_matrices(rotation, strict=False),
    ], axis=1)


def solve_ik(arm, targets, seeds, iterations=60, damping=0.05, max_step=0.3):
    """Damped least-squares inverse kinematics for ``(N, 4, 4)`` end-effector targets.

    Starts from ``seeds`` ``(N, d)``, clamps to the joint limits after every
    update and returns ``(q, residual)`` where ``residual`` is the final
    ``(N,)`` pose-error norm. Unreachable targets end at the closest
    configuration the iteration finds.
    """
    targets = np.asarray(targets, dtype=float)
    q = np.clip(np.array(seeds, dtype=float), arm.lower, arm.upper)
    regularizer = damping ** 2 * np.eye(6)
    for _ in range(iterations):
        cumulative = frames(arm, q)
        ee = ee_matrices(arm, q, cumulative)
        error = pose_errors(targets, ee)
        axes, origins = joint_axes(cumulative)
        lin = np.cross(axes, ee[:, None, :3, 3] - origins)
        jac = np.swapaxes(np.concatenate([lin, axes], axis=2), 1, 2)        # (N, 6, d)
        jac_t = np.swapaxes(jac, 1, 2)
        step = (jac_t @ np.linalg.solve(jac @ jac_t + regularizer, error[..., None]))[..., 0]
        norm = np.linalg.norm(step, axis=1, keepdims=True)
        step *= np.minimum(1.0, max_step / np.maximum(norm, 1e-12))
        q = np.clip(q + step, arm.lower, arm.upper)
    residual = np.linalg.norm(pose_errors(targets, ee_matrices(arm, q)), axis=1)
    return q, residual
