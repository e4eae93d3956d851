"""Grasp feasibility: antipodal candidate sampling, hard/soft negatives, the
Fourier-encoded classifier and the grasp score ``S_G``.

Gripper frame convention: ``y`` is the closing axis between the two jaws,
``z`` the approach direction (palm at negative ``z``), ``x = y × z``. Grasp
poses are expressed in the object frame.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation
from scipy.stats import rankdata

from . import se3
from .conf import GraspTrainingConfig, GripperSpec
from .diff_net import AdamState, Mlp, adam_step, bce_with_logits_loss, grad_params, sigmoid
from .exceptions import (
    DegenerateNoise,
    EmptyDemoGrasps,
    NoGraspsFound,
    ShapeMismatch,
    ValidationFailure,
)

logger = logging.getLogger(__name__)

MIN_SAMPLING_POINTS = 50
CONTACT_BAND = 0.002
CHECKPOINT_VERSION = 'jfto-grasp/1'


@dataclass(frozen=True, eq=False)
class ObjectCloud:
    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        if points.shape != normals.shape:
            raise ShapeMismatch(f'{len(points)} points but {len(normals)} normals')
        if len(normals) and np.any(np.abs(np.linalg.norm(normals, axis=1) - 1.0) > 1e-6):
            raise ValidationFailure('object normals must be unit length', field_path='object_cloud.normals')
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'normals', normals)

    def bounds(self):
        return self.points.min(axis=0), self.points.max(axis=0)


@dataclass(frozen=True)
class GraspCandidateSet:
    positives: tuple
    hard: tuple = ()
    soft: tuple = ()

    def labeled(self):
        poses = list(self.positives) + list(self.hard) + list(self.soft)
        labels = np.concatenate([np.ones(len(self.positives)), np.zeros(len(self.hard) + len(self.soft))])
        return poses, labels

    def to_dict(self):
        def dump(poses, provenance):
            return [{'pose': p.to_array7().tolist(), 'provenance': provenance} for p in poses]
        return {
            'positives': dump(self.positives, 'antipodal'),
            'hard': dump(self.hard, 'perturbed'),
            'soft': dump(self.soft, 'uniform'),
        }


# Antipodal geometry

def antipodal_check(pose, cloud, gripper):
    """True when the jaws at ``pose`` close on two opposed contacts without
    palm or finger interpenetration and with the object centered between them."""
    local = (cloud.points - pose.translation) @ pose.rotation_matrix()
    normals = cloud.normals @ pose.rotation_matrix()
    x, y, z = local.T
    half_open = 0.5 * gripper.width
    half_finger = 0.5 * gripper.finger_width
    half_depth = 0.5 * gripper.depth
    across = np.abs(x) <= half_finger

    fingers = across & (np.abs(y) > half_open) & (np.abs(y) <= half_open + gripper.finger_thickness) & (np.abs(z) <= half_depth)
    palm = (
        across
        & (np.abs(y) <= half_open + gripper.finger_thickness)
        & (z < -half_depth)
        & (z >= -half_depth - gripper.palm_thickness)
    )
    if fingers.any() or palm.any():
        return False

    between = across & (np.abs(y) <= half_open) & (np.abs(z) <= half_depth)
    if between.sum() < 2:
        return False
    y_in = y[between]
    n_in = normals[between]
    y_lo, y_hi = y_in.min(), y_in.max()
    if y_hi - y_lo < 1e-3:
        return False
    if abs(0.5 * (y_lo + y_hi)) > gripper.center_tolerance:
        return False

    cos_tol = np.cos(np.radians(gripper.antipodal_tolerance_deg))
    n_lo = _mean_direction(n_in[y_in <= y_lo + CONTACT_BAND])
    n_hi = _mean_direction(n_in[y_in >= y_hi - CONTACT_BAND])
    if n_lo is None or n_hi is None:
        return False
    return bool(-n_lo[1] >= cos_tol and n_hi[1] >= cos_tol and n_lo @ n_hi <= -cos_tol)


def _mean_direction(normals):
    mean = normals.mean(axis=0)
    norm = np.linalg.norm(mean)
    return None if norm < 1e-6 else mean / norm


def _grasp_frame(closing, approach_seed):
    approach = approach_seed - (approach_seed @ closing) * closing
    norm = np.linalg.norm(approach)
    if norm < 1e-6:
        return None
    approach /= norm
    binormal = np.cross(closing, approach)
    return np.column_stack([binormal, closing, approach])


def sample_antipodal_grasps(cloud, gripper=None, count=100, seed=0, max_attempts=None):
    """Geometry-driven positive sampler on a cloud with normals.

    Picks a surface point, closes along its inward normal, finds the opposite
    contact on that line within the opening width, and keeps the grasp if the
    pose-level ``antipodal_check`` accepts it.
    """
    gripper = gripper or GripperSpec()
    if len(cloud.points) < MIN_SAMPLING_POINTS:
        raise NoGraspsFound(f'cloud has {len(cloud.points)} points, need {MIN_SAMPLING_POINTS}')
    rng = np.random.default_rng(seed)
    cos_tol = np.cos(np.radians(gripper.antipodal_tolerance_deg))
    max_attempts = max_attempts or 30 * count
    line_tol = max(gripper.center_tolerance, 0.003)
    grasps = []
    for _ in range(max_attempts):
        if len(grasps) >= count:
            break
        i = rng.integers(len(cloud.points))
        c0, closing = cloud.points[i], -cloud.normals[i]
        offsets = cloud.points - c0
        along = offsets @ closing
        perp = np.linalg.norm(offsets - along[:, None] * closing, axis=1)
        opposite = (along > 1e-3) & (along <= gripper.width) & (perp <= line_tol) & (cloud.normals @ closing >= cos_tol)
        if not opposite.any():
            continue
        span = along[opposite].max()
        rotation = _grasp_frame(closing, rng.standard_normal(3))
        if rotation is None:
            continue
        pose = se3.Pose.from_matrix(_homogeneous(rotation, c0 + 0.5 * span * closing))
        if antipodal_check(pose, cloud, gripper):
            grasps.append(pose)
    if len(grasps) < max(1, count // 10):
        raise NoGraspsFound(f'only {len(grasps)} of {count} requested grasps survived filtering')
    logger.info('sampled %d antipodal grasps', len(grasps))
    return grasps


def _homogeneous(rotation, translation):
    matrix = np.eye(4)
    matrix[:3, :3] = rotation
    matrix[:3, 3] = translation
    return matrix


def make_negatives(positives, cloud, gripper=None, config=None, seed=0, n_hard=None, n_soft=None):
    """Hard negatives by Lie-algebra perturbation of positives, soft negatives
    uniformly around the object; every negative fails ``antipodal_check``."""
    gripper = gripper or GripperSpec()
    config = config or GraspTrainingConfig()
    if not positives:
        raise NoGraspsFound('make_negatives needs at least one positive')
    rng = np.random.default_rng(seed)
    n_hard = n_hard if n_hard is not None else int(np.ceil(config.negative_ratio * len(positives)))
    n_soft = n_soft if n_soft is not None else int(np.ceil(config.negative_ratio * len(positives)))
    sigma = np.concatenate([np.full(3, config.sigma_translation), np.full(3, config.sigma_rotation)])

    hard, attempts = [], 0
    while len(hard) < n_hard:
        if attempts >= 100 * max(n_hard, 1):
            raise DegenerateNoise(f'perturbation noise too small: {len(hard)} of {n_hard} hard negatives after {attempts} draws')
        attempts += 1
        base = positives[rng.integers(len(positives))]
        candidate = se3.compose(base, se3.exp_se3(rng.standard_normal(6) * sigma))
        if not antipodal_check(candidate, cloud, gripper):
            hard.append(candidate)
    logger.info('hard negatives: %d of %d perturbations failed the antipodal check', len(hard), attempts)

    lo, hi = cloud.bounds()
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * config.soft_inflation
    soft, attempts = [], 0
    while len(soft) < n_soft:
        if attempts >= 100 * max(n_soft, 1):
            raise DegenerateNoise('soft negative region keeps producing feasible grasps')
        attempts += 1
        xyzw = Rotation.random(random_state=rng).as_quat()
        candidate = se3.Pose(np.roll(xyzw, 1), rng.uniform(center - half, center + half))
        if not antipodal_check(candidate, cloud, gripper):
            soft.append(candidate)
    return hard, soft


# Fourier encoding

@dataclass(frozen=True, eq=False)
class EncodingBounds:
    """Per-dimension chart bounds mapped affinely onto [-1, 1]."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def around_cloud(cls, cloud, inflation=2.0):
        lo, hi = cloud.bounds()
        center, half = 0.5 * (lo + hi), 0.5 * np.maximum(hi - lo, 1e-3) * inflation
        return cls(
            np.concatenate([center - half, np.full(3, -np.pi)]),
            np.concatenate([center + half, np.full(3, np.pi)]),
        )

    @classmethod
    def unit(cls):
        return cls(-np.ones(6), np.ones(6))

    def normalize(self, charts):
        """``u`` in [-1, 1] (clipped) and the mask of unclipped entries."""
        raw = 2.0 * (np.asarray(charts) - self.lower) / (self.upper - self.lower) - 1.0
        inside = np.abs(raw) <= 1.0
        return np.clip(raw, -1.0, 1.0), inside

    def slope(self):
        return 2.0 / (self.upper - self.lower)


def _frequencies(k):
    return (2.0 ** np.arange(k)) * np.pi


def fourier_features(u, k):
    """``[sin(2^k pi u), cos(2^k pi u)]`` for ``k = 0..K-1``; ``(N, 12 K)``."""
    u = np.atleast_2d(u)
    phases = u[:, None, :] * _frequencies(k)[None, :, None]       # (N, K, 6)
    return np.concatenate([np.sin(phases), np.cos(phases)], axis=2).reshape(len(u), 12 * k)


def fourier_features_jacobian(u, k):
    """``d features / d u`` as ``(N, 12 K, 6)``."""
    u = np.atleast_2d(u)
    freq = _frequencies(k)[None, :, None]
    phases = u[:, None, :] * freq
    d_sin = np.cos(phases) * freq
    d_cos = -np.sin(phases) * freq
    blocks = np.concatenate([d_sin, d_cos], axis=2)              # (N, K, 12)
    eye = np.tile(np.eye(6), (2, 1))                              # (12, 6)
    return (blocks[..., None] * eye[None, None]).reshape(len(u), 12 * k, 6)


def fourier_encode(p, k, bounds=None):
    bounds = bounds or EncodingBounds.unit()
    u, _ = bounds.normalize(se3.log_se3(p)[None])
    return fourier_features(u, k)[0]


def encode_poses(poses, k, bounds):
    charts = se3.charts_from_matrices(np.array([p.as_matrix() for p in poses]), strict=False)
    u, _ = bounds.normalize(charts)
    return fourier_features(u, k)


# Classifier

def roc_auc(scores, labels):
    """Mann-Whitney AUC with average ranks for ties."""
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        return float('nan')
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def train_classifier(cands, k, bounds, config=None, seed=0):
    """Minimize BCE of ``sigmoid(f(E(p)))``; returns ``(net, train_auc)``."""
    config = config or GraspTrainingConfig()
    poses, labels = cands.labeled()
    if labels.sum() == 0 or labels.sum() == len(labels):
        raise ValidationFailure('classifier training needs both classes', field_path='candidates')
    features = encode_poses(poses, k, bounds)
    rng = np.random.default_rng(seed)
    widths = (12 * k, *config.widths_hidden, 1)
    net = Mlp.initialize(widths, rng)
    params = net.parameters()
    state = AdamState.for_params(params, lr=config.lr)
    batch = min(config.batch, len(labels))
    loss = float('nan')
    for step in range(config.steps):
        index = rng.choice(len(labels), size=batch, replace=False)
        loss, grads = grad_params(net, bce_with_logits_loss(labels[index]), features[index])
        params, state = adam_step(params, grads, state)
        net = net.with_parameters(params)
        if step % 500 == 0 or step == config.steps - 1:
            logger.info('classifier step %d/%d bce %.5f', step + 1, config.steps, loss)
    auc = roc_auc(net.forward(features)[:, 0], labels)
    logger.info('classifier train AUC %.4f', auc)
    return net, auc


def split_candidates(cands, holdout=0.3, seed=0):
    rng = np.random.default_rng(seed)

    def split(poses):
        poses = list(poses)
        order = rng.permutation(len(poses))
        n_test = int(round(holdout * len(poses)))
        return tuple(poses[i] for i in order[n_test:]), tuple(poses[i] for i in order[:n_test])

    (pos_train, pos_test), (hard_train, hard_test), (soft_train, soft_test) = (
        split(cands.positives), split(cands.hard), split(cands.soft)
    )
    return (
        GraspCandidateSet(pos_train, hard_train, soft_train),
        GraspCandidateSet(pos_test, hard_test, soft_test),
    )


def evaluate_classifier(net, cands, k, bounds):
    """AUC and mean feasibility per class on a (held-out) candidate set."""
    def scores(poses):
        if not poses:
            return np.zeros(0)
        return sigmoid(net.forward(encode_poses(poses, k, bounds))[:, 0])

    pos, hard, soft = scores(cands.positives), scores(cands.hard), scores(cands.soft)
    all_scores = np.concatenate([pos, hard, soft])
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(hard) + len(soft))])
    return {
        'auc': roc_auc(all_scores, labels),
        'mean_positive': float(pos.mean()) if len(pos) else float('nan'),
        'mean_hard': float(hard.mean()) if len(hard) else float('nan'),
        'mean_soft': float(soft.mean()) if len(soft) else float('nan'),
    }


# Grasp score

@dataclass(frozen=True, eq=False)
class GraspScorer:
    classifier: Mlp
    k: int
    bounds: EncodingBounds
    human_grasps: tuple = ()
    lam: float = 0.5
    weights: se3.DistanceWeights = field(default_factory=se3.DistanceWeights)
    train_auc: float = float('nan')

    def __post_init__(self):
        grasps = tuple(self.human_grasps)
        object.__setattr__(self, 'human_grasps', grasps)
        charts = np.array([se3.log_se3(h) for h in grasps]).reshape(-1, 6)
        object.__setattr__(self, '_human_charts', charts)

    @property
    def human_charts(self):
        return self._human_charts

    def to_dict(self):
        return {
            'version': CHECKPOINT_VERSION,
            'classifier': self.classifier.to_dict(),
            'fourier_k': self.k,
            'bounds_lower': self.bounds.lower.tolist(),
            'bounds_upper': self.bounds.upper.tolist(),
            'human_grasps': [h.to_array7().tolist() for h in self.human_grasps],
            'similarity_weight': self.lam,
            'w_trans': self.weights.w_trans,
            'train_auc': None if np.isnan(self.train_auc) else self.train_auc,
        }

    @classmethod
    def from_dict(cls, payload):
        from .serializers import GraspCheckpointSerializer, load_payload

        data = load_payload(GraspCheckpointSerializer, payload)
        net = Mlp.from_dict(data['classifier'])
        if net.n_inputs != 12 * data['fourier_k']:
            raise ValidationFailure('classifier input width must be 12 K', field_path='classifier.widths')
        auc = data.get('train_auc')
        return cls(
            classifier=net,
            k=data['fourier_k'],
            bounds=EncodingBounds(np.asarray(data['bounds_lower']), np.asarray(data['bounds_upper'])),
            human_grasps=tuple(se3.Pose.from_array7(h) for h in data['human_grasps']),
            lam=data['similarity_weight'],
            weights=se3.DistanceWeights(data['w_trans']),
            train_auc=float('nan') if auc is None else auc,
        )


def feasibility_charts(scorer, charts):
    u, _ = scorer.bounds.normalize(np.atleast_2d(charts))
    return sigmoid(scorer.classifier.forward(fourier_features(u, scorer.k))[:, 0])


def demo_distance_charts(scorer, charts):
    """``D_H`` for ``(N, 6)`` charts; returns ``(values, argmin)``."""
    charts = np.atleast_2d(charts)
    if len(scorer.human_charts) == 0:
        raise EmptyDemoGrasps('the human grasp set H is empty')
    diff = charts[:, None, :] - scorer.human_charts[None]
    w = scorer.weights.w_trans
    dist = w * np.linalg.norm(diff[..., :3], axis=2) + (1.0 - w) * np.abs(diff[..., 3:]).sum(axis=2)
    nearest = dist.argmin(axis=1)
    return dist[np.arange(len(charts)), nearest], nearest


def grasp_score_charts(scorer, charts):
    charts = np.atleast_2d(charts)
    score = feasibility_charts(scorer, charts)
    if scorer.lam > 0.0:
        score = score - scorer.lam * demo_distance_charts(scorer, charts)[0]
    return score


def grasp_score(scorer, p):
    """``S_G = sigmoid(f(E(p))) - lambda * min_h D_SE3(p, h)``."""
    if len(scorer.human_grasps) == 0 and scorer.lam != 0.0:
        raise EmptyDemoGrasps('the human grasp set H is empty')
    return float(grasp_score_charts(scorer, se3.log_se3(p)[None])[0])


def grasp_score_grad_charts(scorer, charts):
    """Analytic ``d S_G / d chart``, ``(N, 6)``; subgradient at the min switch."""
    charts = np.atleast_2d(charts)
    u, inside = scorer.bounds.normalize(charts)
    features = fourier_features(u, scorer.k)
    logits = scorer.classifier.forward(features)[:, 0]
    d_logit = scorer.classifier.jacobian_input(features)[:, 0, :]             # (N, 12K)
    d_u = np.einsum('ne,ned->nd', d_logit, fourier_features_jacobian(u, scorer.k))
    s = sigmoid(logits)
    grad = (s * (1.0 - s))[:, None] * d_u * scorer.bounds.slope() * inside
    if scorer.lam > 0.0:
        _, nearest = demo_distance_charts(scorer, charts)
        diff = charts - scorer.human_charts[nearest]
        w = scorer.weights.w_trans
        trans_norm = np.linalg.norm(diff[:, :3], axis=1, keepdims=True)
        with np.errstate(invalid='ignore', divide='ignore'):
            d_trans = np.where(trans_norm > 0.0, diff[:, :3] / trans_norm, 0.0)
        d_dist = np.concatenate([w * d_trans, (1.0 - w) * np.sign(diff[:, 3:])], axis=1)
        grad = grad - scorer.lam * d_dist
    return grad
