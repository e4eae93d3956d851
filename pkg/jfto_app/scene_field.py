"""Distance field over the fused background cloud and the hinge collision score."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp, softmax

from .exceptions import EmptyCloud, ValidationFailure

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SceneField:
    points: np.ndarray
    tree: cKDTree
    margin: float = 0.01
    softmin_temperature: float = 0.005
    softmin_neighbors: int = 16

    def distance(self, query):
        """Exact Euclidean distance from ``(..., 3)`` queries to the nearest cloud point."""
        query = np.asarray(query, dtype=float)
        dist, _ = self.tree.query(query.reshape(-1, 3))
        return dist.reshape(query.shape[:-1])

    def distance_and_gradient(self, query):
        query = np.asarray(query, dtype=float)
        flat = query.reshape(-1, 3)
        dist, index = self.tree.query(flat)
        offset = flat - self.points[index]
        with np.errstate(invalid='ignore', divide='ignore'):
            grad = np.where(dist[:, None] > 0.0, offset / dist[:, None], 0.0)
        return dist.reshape(query.shape[:-1]), grad.reshape(query.shape)

    def soft_distance(self, query):
        """Soft-min over the nearest neighbors: ``-T log sum exp(-d_i / T)``."""
        query = np.asarray(query, dtype=float)
        flat = query.reshape(-1, 3)
        k = min(self.softmin_neighbors, len(self.points))
        dist, _ = self.tree.query(flat, k=k)
        dist = dist.reshape(len(flat), k)
        value = -self.softmin_temperature * logsumexp(-dist / self.softmin_temperature, axis=1)
        return value.reshape(query.shape[:-1])

    def soft_distance_and_gradient(self, query):
        query = np.asarray(query, dtype=float)
        flat = query.reshape(-1, 3)
        k = min(self.softmin_neighbors, len(self.points))
        dist, index = self.tree.query(flat, k=k)
        dist = dist.reshape(len(flat), k)
        index = index.reshape(len(flat), k)
        temperature = self.softmin_temperature
        value = -temperature * logsumexp(-dist / temperature, axis=1)
        weights = softmax(-dist / temperature, axis=1)
        offsets = flat[:, None, :] - self.points[index]
        with np.errstate(invalid='ignore', divide='ignore'):
            units = np.where(dist[..., None] > 0.0, offsets / dist[..., None], 0.0)
        grad = (weights[..., None] * units).sum(axis=1)
        return value.reshape(query.shape[:-1]), grad.reshape(query.shape)


def load_points(path):
    """Read a cloud file: a JSON array (nested or flat) or raw little-endian float32 XYZ triplets."""
    path = Path(path)
    if path.suffix == '.json':
        with open(path) as handle:
            values = np.asarray(json.load(handle), dtype=float).ravel()
    else:
        values = np.fromfile(path, dtype='<f4').astype(float)
    if values.size % 3:
        raise ValidationFailure(f'{path}: {values.size} values is not a multiple of 3', field_path='points')
    return values.reshape(-1, 3)


def build_field(points, margin=0.01, softmin_temperature=0.005, softmin_neighbors=16):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        raise EmptyCloud('background cloud has no points')
    if margin <= 0.0:
        raise ValidationFailure(f'margin must be positive, got {margin}', field_path='margin')
    logger.debug('distance field over %d points, margin %.4f m', len(points), margin)
    return SceneField(points, cKDTree(points), margin, softmin_temperature, softmin_neighbors)


def hinge(clearance, margin):
    """Per-point contribution: 0 at the margin, 1 when touching, linear between."""
    return np.maximum(0.0, margin - clearance) / margin


def collision_score(field, body_points_per_step, radii=None):
    """``(1/T) sum_t sum_p max(0, margin - dist(p)) / margin``.

    ``body_points_per_step`` is a sequence over ``t = 0..T`` of ``(P, 3)``
    point sets; ``radii`` (optional, ``(P,)``) is subtracted from the distance.
    """
    steps = [np.asarray(points, dtype=float).reshape(-1, 3) for points in body_points_per_step]
    if not steps:
        return 0.0
    total = 0.0
    for points in steps:
        clearance = field.distance(points)
        if radii is not None:
            clearance = clearance - radii
        total += hinge(clearance, field.margin).sum()
    return float(total / max(len(steps) - 1, 1))


def min_clearance(field, body_points_per_step, radii=None):
    clearances = []
    for points in body_points_per_step:
        clearance = field.distance(np.asarray(points, dtype=float).reshape(-1, 3))
        if radii is not None:
            clearance = clearance - radii
        clearances.append(clearance.min())
    return float(min(clearances))
