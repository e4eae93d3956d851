"""SE(3) / SO(3) pose algebra, the 6D chart and the weighted pose distance.

Poses store a unit quaternion ``(w, x, y, z)`` and a translation in meters.
The 6D chart is decoupled: translation verbatim, rotation as the axis-angle
vector of the rotation relative to a chart center (identity by default).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import ChartSingularity, ShapeMismatch

SMALL_ANGLE = 1e-6
SINGULAR_MARGIN = 1e-6
IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def _canonical(quat):
    quat = np.asarray(quat, dtype=float)
    norm = np.linalg.norm(quat)
    if norm == 0.0:
        raise ShapeMismatch('zero quaternion')
    if abs(norm - 1.0) > 1e-12:
        quat = quat / norm
    # double cover: q and -q are stored identically
    if quat[0] < 0.0 or (quat[0] == 0.0 and next(c for c in quat[1:] if c != 0.0) < 0.0):
        quat = -quat
    return quat


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=float)
        translation = np.asarray(self.translation, dtype=float)
        if rotation.shape != (4,) or translation.shape != (3,):
            raise ShapeMismatch(f'pose needs (4,) and (3,), got {rotation.shape} and {translation.shape}')
        rotation = _canonical(rotation)
        rotation.setflags(write=False)
        translation = translation.copy()
        translation.setflags(write=False)
        object.__setattr__(self, 'rotation', rotation)
        object.__setattr__(self, 'translation', translation)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, matrix):
        matrix = np.asarray(matrix, dtype=float)
        xyzw = Rotation.from_matrix(matrix[:3, :3]).as_quat()
        return cls(np.roll(xyzw, 1), matrix[:3, 3])

    @classmethod
    def from_array7(cls, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (7,):
            raise ShapeMismatch(f'pose array needs 7 numbers, got {values.shape}')
        return cls(values[3:], values[:3])

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)):
        return cls(quat_from_rotvec(rotvec), translation)

    def to_array7(self):
        """[tx, ty, tz, qw, qx, qy, qz]"""
        return np.concatenate([self.translation, self.rotation])

    def rotation_matrix(self):
        return quat_to_matrix(self.rotation)

    def as_matrix(self):
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation_matrix()
        matrix[:3, 3] = self.translation
        return matrix

    def angle(self):
        return rotation_angle(IDENTITY_QUAT, self.rotation)

    def transform_points(self, points):
        return np.asarray(points, dtype=float) @ self.rotation_matrix().T + self.translation

    def isclose(self, other, atol=1e-9):
        return (
            np.linalg.norm(self.translation - other.translation) <= atol
            and rotation_angle(self.rotation, other.rotation) <= atol
        )

    def __repr__(self):
        return f'Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})'


@dataclass(frozen=True)
class DistanceWeights:
    w_trans: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.w_trans <= 1.0:
            raise ValueError(f'w_trans must lie in [0, 1], got {self.w_trans}')


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_rotvec(rotvec):
    rotvec = np.asarray(rotvec, dtype=float)
    theta = np.linalg.norm(rotvec)
    if theta < SMALL_ANGLE:
        return np.concatenate([[1.0 - theta * theta / 8.0], rotvec * (0.5 - theta * theta / 48.0)])
    return np.concatenate([[np.cos(theta / 2.0)], rotvec * (np.sin(theta / 2.0) / theta)])


def rotvec_from_quat(q):
    q = _canonical(q)
    w, xyz = q[0], q[1:]
    s = np.linalg.norm(xyz)
    theta = 2.0 * np.arctan2(s, w)
    if theta >= np.pi - SINGULAR_MARGIN:
        raise ChartSingularity(f'rotation angle {theta:.9f} is at the chart boundary', angle=float(theta))
    if theta < SMALL_ANGLE:
        ratio = s / w
        return xyz * (2.0 / w) * (1.0 - ratio * ratio / 3.0)
    return xyz * (theta / s)


def compose(a, b):
    """Rigid-body composition ``a ∘ b``."""
    rotation = quat_multiply(a.rotation, b.rotation)
    translation = a.translation + a.rotation_matrix() @ b.translation
    return Pose(rotation, translation)


def inverse(p):
    rotation = quat_conjugate(p.rotation)
    return Pose(rotation, -(quat_to_matrix(rotation) @ p.translation))


def exp_se3(xi):
    """Decoupled exponential: ``xi = (t, rotvec)`` -> Pose(exp(rotvec), t)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (6,):
        raise ShapeMismatch(f'tangent vector needs 6 entries, got {xi.shape}')
    return Pose(quat_from_rotvec(xi[3:]), xi[:3])


def log_se3(p):
    return np.concatenate([p.translation, rotvec_from_quat(p.rotation)])


def chart(p, center=None):
    """6D chart of ``p`` relative to a rotation center quaternion."""
    if center is None:
        return log_se3(p)
    relative = quat_multiply(quat_conjugate(np.asarray(center, dtype=float)), p.rotation)
    return np.concatenate([p.translation, rotvec_from_quat(relative)])


def from_chart(vec, center=None):
    vec = np.asarray(vec, dtype=float)
    if np.linalg.norm(vec[3:]) >= np.pi:
        raise ChartSingularity('rotation vector norm must stay below pi')
    pose = exp_se3(vec)
    if center is None:
        return pose
    return Pose(quat_multiply(np.asarray(center, dtype=float), pose.rotation), pose.translation)


def pose_distance(p1, p2, w=DistanceWeights()):
    """``w_trans * ||t1 - t2||_2 + (1 - w_trans) * ||phi1 - phi2||_1``"""
    trans = np.linalg.norm(p1.translation - p2.translation)
    rot = np.abs(rotvec_from_quat(p1.rotation) - rotvec_from_quat(p2.rotation)).sum()
    return w.w_trans * trans + (1.0 - w.w_trans) * rot


def rotation_angle(r1, r2):
    """Geodesic angle in [0, pi] between two unit quaternions."""
    relative = quat_multiply(quat_conjugate(np.asarray(r1, dtype=float)), np.asarray(r2, dtype=float))
    return float(2.0 * np.arctan2(np.linalg.norm(relative[1:]), abs(relative[0])))


def karcher_mean(quats, tol=1e-12, max_iter=100):
    """Intrinsic (Karcher) mean of rotations given as (n, 4) quaternions."""
    rotations = Rotation.from_quat(np.roll(np.asarray(quats, dtype=float), -1, axis=1))
    mean = rotations[0]
    for _ in range(max_iter):
        delta = (mean.inv() * rotations).as_rotvec().mean(axis=0)
        mean = mean * Rotation.from_rotvec(delta)
        if np.linalg.norm(delta) < tol:
            break
    return _canonical(np.roll(mean.as_quat(), 1))


def skew(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


# Batched helpers used by the optimizer. Matrices are (..., 3, 3).

def rotvecs_from_matrices(rotations, strict=True):
    """Rotation vectors of (..., 3, 3) matrices; ``strict=False`` skips the boundary check."""
    rotations = np.asarray(rotations, dtype=float)
    shape = rotations.shape[:-2]
    rotvecs = Rotation.from_matrix(rotations.reshape(-1, 3, 3)).as_rotvec()
    angles = np.linalg.norm(rotvecs, axis=1)
    if strict and np.any(angles >= np.pi - SINGULAR_MARGIN):
        raise ChartSingularity('rotation angle at the chart boundary', angle=float(angles.max()))
    return rotvecs.reshape(shape + (3,))


def charts_from_matrices(transforms, center_rotations=None, strict=True):
    """Charts of (..., 4, 4) transforms; centers are (..., 3, 3) or None."""
    transforms = np.asarray(transforms, dtype=float)
    rotations = transforms[..., :3, :3]
    if center_rotations is not None:
        rotations = np.swapaxes(center_rotations, -1, -2) @ rotations
    return np.concatenate([transforms[..., :3, 3], rotvecs_from_matrices(rotations, strict)], axis=-1)


def left_jacobian_inverse(rotvec):
    """Inverse left Jacobian of SO(3): d(rotvec) = J^-1 @ omega for left perturbations."""
    theta = np.linalg.norm(rotvec)
    phi = skew(rotvec)
    if theta < SMALL_ANGLE:
        return np.eye(3) - 0.5 * phi + phi @ phi / 12.0
    coeff = 1.0 / theta ** 2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * phi + coeff * phi @ phi


def left_jacobians_inverse(rotvecs):
    """Batched ``left_jacobian_inverse`` for (..., 3) rotation vectors."""
    rotvecs = np.asarray(rotvecs, dtype=float)
    flat = rotvecs.reshape(-1, 3)
    theta = np.linalg.norm(flat, axis=1)
    phi = np.zeros((len(flat), 3, 3))
    phi[:, 0, 1], phi[:, 0, 2] = -flat[:, 2], flat[:, 1]
    phi[:, 1, 0], phi[:, 1, 2] = flat[:, 2], -flat[:, 0]
    phi[:, 2, 0], phi[:, 2, 1] = -flat[:, 1], flat[:, 0]
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    with np.errstate(divide='ignore', invalid='ignore'):
        coeff = 1.0 / safe ** 2 - (1.0 + np.cos(safe)) / (2.0 * safe * np.sin(safe))
    coeff = np.where(small, 1.0 / 12.0, coeff)
    jac = np.eye(3) - 0.5 * phi + coeff[:, None, None] * phi @ phi
    return jac.reshape(rotvecs.shape[:-1] + (3, 3))
