"""Reading and writing run artifacts: checkpoints, trajectories, CSV plot data."""

import csv
import json
import logging
from pathlib import Path

from . import se3
from .demo_io import load_scene
from .exceptions import MissingArtifact
from .flow_density import FlowDensityModel
from .grasp_model import GraspScorer
from .serializers import TRAJECTORY_VERSION, TrajectoryFileSerializer, load_payload

logger = logging.getLogger(__name__)

SCENE_FILE = 'scene.json'
FLOW_FILE = 'flow.json'
GRASP_FILE = 'grasp.json'
CANDIDATES_FILE = 'candidates.json'
RESULT_FILE = 'result.json'
TRACE_FILE = 'trace.csv'
METRICS_FILE = 'metrics.json'
ERROR_FILE = 'error.json'


def read_json(path):
    with open(path) as handle:
        return json.load(handle)


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as handle:
        json.dump(payload, handle, indent=2)
    return path


def write_csv(path, rows, fieldnames):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    return path


def _require(path, producer):
    if path is None or not Path(path).exists():
        raise MissingArtifact(producer, path or '')
    return Path(path)


def require_scene(path):
    return load_scene(_require(path, 'synth'))


def require_flow(path):
    return FlowDensityModel.from_dict(read_json(_require(path, 'train-flow')))


def require_grasp(path):
    return GraspScorer.from_dict(read_json(_require(path, 'train-grasp')))


def trajectory_payload(result):
    return {
        'version': TRAJECTORY_VERSION,
        'object_traj': [p.to_array7().tolist() for p in result.object_traj],
        'joint_traj': result.trajectory.to_list(),
        'grasp': result.grasp.to_array7().tolist(),
        'score': result.score.as_dict(),
    }


def load_object_traj(path, producer='optimize'):
    data = load_payload(TrajectoryFileSerializer, read_json(_require(path, producer)))
    return [se3.Pose.from_array7(p) for p in data['object_traj']]


def pose_rows(series, poses):
    return [
        {'series': series, 't': t, 'x': float(p.translation[0]), 'y': float(p.translation[1]), 'z': float(p.translation[2])}
        for t, p in enumerate(poses)
    ]


POSE_ROW_FIELDS = ['series', 't', 'x', 'y', 'z']
