"""Scene files and synthetic demonstration fixtures.

A scene file is one JSON document (``jfto-scene/1``): demos as lists of
``[tx, ty, tz, qw, qx, qy, qz]`` poses, the human grasp set, the background
and object clouds as flat float arrays, and the initial object pose ``x0``.
Everything is in meters and radians; grasp poses and the object cloud are in
the object frame, everything else in the world frame.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from . import se3
from .flow_density import DemoSet
from .grasp_model import ObjectCloud
from .serializers import SCENE_VERSION, SceneBundleSerializer, load_payload

logger = logging.getLogger(__name__)

START_TOLERANCE_M = 0.01
START_TOLERANCE_RAD = 0.1
SHAPES = ('line', 'arc', 'figure8', 'pour')


@dataclass(frozen=True, eq=False)
class SceneBundle:
    demos: DemoSet
    x0: se3.Pose
    object_cloud: ObjectCloud
    background: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    human_grasps: tuple = ()
    task: str = 'scene'
    metadata: dict = field(default_factory=dict)
    units: str = 'm/rad'

    def __post_init__(self):
        object.__setattr__(self, 'background', np.asarray(self.background, dtype=float).reshape(-1, 3))
        object.__setattr__(self, 'human_grasps', tuple(self.human_grasps))

    @property
    def horizon(self):
        return self.demos.horizon

    @property
    def has_human_grasps(self):
        return len(self.human_grasps) > 0

    def start_deviations(self):
        """Per-demo ``(translation, angle)`` offsets of the first pose from ``x0``."""
        return [
            (float(np.linalg.norm(traj[0].translation - self.x0.translation)),
             se3.rotation_angle(traj[0].rotation, self.x0.rotation))
            for traj in self.demos.demos
        ]

    def to_dict(self):
        return {
            'version': SCENE_VERSION,
            'task': self.task,
            'units': self.units,
            'metadata': self.metadata,
            'demos': [[p.to_array7().tolist() for p in traj] for traj in self.demos.demos],
            'human_grasps': [h.to_array7().tolist() for h in self.human_grasps],
            'background_cloud': self.background.ravel().tolist(),
            'object_cloud': {
                'points': self.object_cloud.points.ravel().tolist(),
                'normals': self.object_cloud.normals.ravel().tolist(),
            },
            'x0': self.x0.to_array7().tolist(),
        }


def scene_from_dict(payload):
    data = load_payload(SceneBundleSerializer, payload)
    metadata = dict(data['metadata'])
    if 'human_grasps' not in data:
        logger.warning('scene has no human grasps; grasp similarity disabled (lambda forced to 0)')
        metadata['human_grasps_missing'] = True
    bundle = SceneBundle(
        demos=DemoSet(tuple(tuple(se3.Pose.from_array7(p) for p in traj) for traj in data['demos'])),
        x0=se3.Pose.from_array7(data['x0']),
        object_cloud=ObjectCloud(
            np.asarray(data['object_cloud']['points']).reshape(-1, 3),
            np.asarray(data['object_cloud']['normals']).reshape(-1, 3),
        ),
        background=np.asarray(data['background_cloud']).reshape(-1, 3),
        human_grasps=tuple(se3.Pose.from_array7(h) for h in data.get('human_grasps', [])),
        task=data['task'],
        metadata=metadata,
        units=data['units'],
    )
    for index, (dist, angle) in enumerate(bundle.start_deviations()):
        if dist > START_TOLERANCE_M or angle > START_TOLERANCE_RAD:
            logger.warning('demo %d starts %.4f m / %.4f rad away from x0', index, dist, angle)
    return bundle


def load_scene(path):
    with open(path) as handle:
        return scene_from_dict(json.load(handle))


def save_scene(bundle, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as handle:
        json.dump(bundle.to_dict(), handle)
    logger.info('wrote scene %s (%d demos, T=%d)', path, bundle.demos.n, bundle.horizon)


# Geometry fixtures

def box_cloud(size=0.04, spacing=0.005):
    """Surface samples of an axis-aligned cube centered at the origin, with outward normals."""
    half = 0.5 * size
    ticks = np.linspace(-half, half, int(round(size / spacing)) + 1)
    grid_u, grid_v = (g.ravel() for g in np.meshgrid(ticks, ticks))
    points, normals = [], []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for sign in (-1.0, 1.0):
            face = np.zeros((len(grid_u), 3))
            face[:, axis] = sign * half
            face[:, others[0]] = grid_u
            face[:, others[1]] = grid_v
            normal = np.zeros(3)
            normal[axis] = sign
            points.append(face)
            normals.append(np.tile(normal, (len(face), 1)))
    return ObjectCloud(np.concatenate(points), np.concatenate(normals))


def _grasp_from_axes(closing, approach, center=(0.0, 0.0, 0.0)):
    closing = np.asarray(closing, dtype=float) / np.linalg.norm(closing)
    approach = np.asarray(approach, dtype=float)
    approach = approach - (approach @ closing) * closing
    approach /= np.linalg.norm(approach)
    matrix = np.eye(4)
    matrix[:3, :3] = np.column_stack([np.cross(closing, approach), closing, approach])
    matrix[:3, 3] = center
    return se3.Pose.from_matrix(matrix)


def side_grasps(approach_axis=0, closing_axis=1, tilts=(-0.25, 0.0, 0.25)):
    """Human-like grasps on the cube: approach along ``+approach_axis``, closing
    along ``closing_axis``, tilted about the closing axis."""
    approach = np.eye(3)[approach_axis]
    closing = np.eye(3)[closing_axis]
    grasps = []
    for tilt in tilts:
        tilted = Rotation.from_rotvec(tilt * closing).apply(approach)
        grasps.append(_grasp_from_axes(closing, tilted))
    return grasps


def gen_box_object(size=0.04, spacing=0.005):
    """Cube cloud plus a small human grasp set of side grasps."""
    return box_cloud(size, spacing), side_grasps()


def table_plane(spacing=0.02, x_range=(0.15, 0.6), y_range=(-0.35, 0.35), height=0.0):
    xs = np.arange(x_range[0], x_range[1] + 1e-9, spacing)
    ys = np.arange(y_range[0], y_range[1] + 1e-9, spacing)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, height)])


def solid_block(center, half_sizes, spacing=0.01):
    axes = [
        np.linspace(c - h, c + h, max(int(round(2 * h / spacing)) + 1, 2))
        for c, h in zip(center, half_sizes)
    ]
    grid = np.meshgrid(*axes, indexing='ij')
    return np.column_stack([g.ravel() for g in grid])


# Demonstration synthesis

def _tangent_rotations(positions):
    """Yaw-only orientations whose x axis follows the horizontal path tangent."""
    tangent = np.gradient(positions, axis=0)
    yaw = np.unwrap(np.arctan2(tangent[:, 1], tangent[:, 0]))
    return Rotation.from_euler('z', yaw)


def _path(shape, s):
    if shape == 'line':
        start, end = np.array([0.30, -0.15, 0.20]), np.array([0.40, 0.15, 0.25])
        positions = start + s[:, None] * (end - start)
        return positions, _tangent_rotations(positions)
    if shape == 'arc':
        theta = -np.pi / 3 + s * (2 * np.pi / 3)
        positions = np.column_stack([0.22 + 0.15 * np.cos(theta), 0.15 * np.sin(theta), np.full(len(s), 0.20)])
        return positions, _tangent_rotations(positions)
    if shape == 'figure8':
        # lemniscate of Gerono; crosses itself once at phi = pi/2, 3pi/2
        phi = 0.1 + s * (2.0 * np.pi - 0.2)
        positions = np.column_stack([
            0.35 + 0.08 * np.sin(phi) * np.cos(phi),
            0.12 * np.cos(phi),
            np.full(len(s), 0.20),
        ])
        return positions, _tangent_rotations(positions)
    if shape == 'pour':
        start, end = np.array([0.32, -0.10, 0.20]), np.array([0.36, 0.02, 0.26])
        positions = start + s[:, None] * (end - start)
        roll = 2.0 * np.sin(0.5 * np.pi * s) ** 2
        return positions, Rotation.from_euler('zx', np.column_stack([np.full(len(s), np.pi / 2), roll]))
    raise ValueError(f'unknown task shape {shape!r}; choose from {SHAPES}')


def _noisy_demos(positions, rotations, n, noise, rot_noise, rng):
    """``n`` noisy copies; the first pose gets a quarter of the noise."""
    envelope = np.ones(len(positions))
    envelope[0] = 0.25
    demos = []
    for _ in range(n):
        dt = rng.standard_normal(positions.shape) * noise * envelope[:, None]
        dr = rng.standard_normal(positions.shape) * rot_noise * envelope[:, None]
        noisy = rotations * Rotation.from_rotvec(dr)
        quats = np.roll(noisy.as_quat(), 1, axis=1)
        demos.append(tuple(se3.Pose(q, p) for q, p in zip(quats, positions + dt)))
    return demos


def _start_pose(positions, rotations):
    return se3.Pose(np.roll(rotations[0].as_quat(), 1), positions[0])


def gen_unimodal(shape='line', noise=0.005, n=10, horizon=20, seed=0, rot_noise=None):
    """``n`` noisy copies of a parametric path with tangent-following orientation."""
    if n < 2:
        raise ValueError('gen_unimodal needs n >= 2')
    rng = np.random.default_rng(seed)
    rot_noise = 3.0 * noise if rot_noise is None else rot_noise
    s = np.linspace(0.0, 1.0, horizon + 1)
    positions, rotations = _path(shape, s)
    cloud, grasps = gen_box_object()
    return SceneBundle(
        demos=DemoSet(tuple(_noisy_demos(positions, rotations, n, noise, rot_noise, rng))),
        x0=_start_pose(positions, rotations),
        object_cloud=cloud,
        background=table_plane(),
        human_grasps=tuple(grasps),
        task=shape,
        metadata={'generator': 'unimodal', 'shape': shape, 'noise': noise, 'n': n, 'horizon': horizon, 'seed': seed},
    )


def bimodal_obstacle(gap):
    return solid_block(center=(0.35, 0.0, 0.15), half_sizes=(gap / 4.0, 0.03, 0.05))


def gen_bimodal_obstacle(gap=0.2, n=5, horizon=20, seed=0, noise=0.003):
    """Two demo modes detouring either side of a block on the straight route."""
    if n < 2:
        raise ValueError('gen_bimodal_obstacle needs n >= 2 per mode')
    rng = np.random.default_rng(seed)
    s = np.linspace(0.0, 1.0, horizon + 1)
    start, end = np.array([0.35, -0.20, 0.15]), np.array([0.35, 0.20, 0.15])
    straight = start + s[:, None] * (end - start)
    rotations = Rotation.from_euler('z', np.full(len(s), np.pi / 2))
    demos = []
    for sign in (-1.0, 1.0):
        positions = straight.copy()
        positions[:, 0] += sign * 0.5 * gap * np.sin(np.pi * s)
        demos.extend(_noisy_demos(positions, rotations, n, noise, 3.0 * noise, rng))
    cloud, grasps = gen_box_object()
    return SceneBundle(
        demos=DemoSet(tuple(demos)),
        x0=_start_pose(straight, rotations),
        object_cloud=cloud,
        background=np.concatenate([bimodal_obstacle(gap), table_plane()]),
        human_grasps=tuple(grasps),
        task='bimodal',
        metadata={'generator': 'bimodal_obstacle', 'gap': gap, 'n_per_mode': n, 'horizon': horizon, 'seed': seed},
    )


def gen_limit_conflict(n=8, horizon=20, seed=0, noise=0.003, roll=2.4):
    """Demos roll the object about the travel direction while the human grasp
    approaches along that same axis, so the demo-like grasp puts the whole roll
    on the last wrist joint."""
    rng = np.random.default_rng(seed)
    s = np.linspace(0.0, 1.0, horizon + 1)
    start, end = np.array([0.35, -0.10, 0.20]), np.array([0.35, 0.10, 0.20])
    positions = start + s[:, None] * (end - start)
    rotations = Rotation.from_rotvec(np.outer(roll * s, [0.0, 1.0, 0.0]))
    cloud = box_cloud()
    grasps = side_grasps(approach_axis=1, closing_axis=0)
    return SceneBundle(
        demos=DemoSet(tuple(_noisy_demos(positions, rotations, n, noise, 3.0 * noise, rng))),
        x0=_start_pose(positions, rotations),
        object_cloud=cloud,
        background=table_plane(),
        human_grasps=tuple(grasps),
        task='limit_conflict',
        metadata={'generator': 'limit_conflict', 'roll': roll, 'n': n, 'horizon': horizon, 'seed': seed},
    )


def resample_demo(poses, count):
    """Resample a pose sequence to ``count`` poses, uniform in the original index:
    translation linearly, rotation along the geodesic."""
    if count < 1:
        raise ValueError('count must be >= 1')
    if len(poses) == 1:
        return tuple(poses) * count
    knots = np.linspace(0.0, 1.0, len(poses))
    target = np.linspace(0.0, 1.0, count)
    translations = np.array([p.translation for p in poses])
    rotations = Rotation.from_quat(np.array([np.roll(p.rotation, -1) for p in poses]))
    slerp = Slerp(knots, rotations)
    quats = np.roll(slerp(target).as_quat(), 1, axis=1)
    moved = np.column_stack([np.interp(target, knots, translations[:, k]) for k in range(3)])
    return tuple(se3.Pose(q, t) for q, t in zip(quats, moved))


def resample_scene(bundle, horizon):
    demos = DemoSet(tuple(resample_demo(traj, horizon + 1) for traj in bundle.demos.demos))
    return replace(bundle, demos=demos)


def generate(task, seed=0, **params):
    """Dispatch for the ``synth`` command."""
    params = {k: v for k, v in params.items() if v is not None}
    if task in SHAPES:
        params.pop('gap', None)
        return gen_unimodal(shape=task, seed=seed, **params)
    if task == 'bimodal':
        return gen_bimodal_obstacle(seed=seed, **params)
    if task == 'limit_conflict':
        params.pop('gap', None)
        return gen_limit_conflict(seed=seed, **params)
    raise ValueError(f'unknown task {task!r}')
