"""Pipeline stages shared by the management commands."""

import logging
from dataclasses import replace

import numpy as np

from . import grasp_model, optimizer, scene_field, se3
from .conf import FlowTrainingConfig, GraspTrainingConfig, GripperSpec, SceneConfig, section
from .flow_density import train_flow

logger = logging.getLogger(__name__)

METHODS = ('joint', 'sequential', 'distance')


def build_scene_field(bundle, config=None, extra_points=None):
    """Distance field over the scene background, fused with ``extra_points`` when given."""
    config = config or SceneConfig.from_settings()
    points = bundle.background
    if extra_points is not None and len(extra_points):
        points = np.vstack([np.asarray(points, dtype=float).reshape(-1, 3), extra_points])
    return scene_field.build_field(
        points,
        margin=config.margin,
        softmin_temperature=config.softmin_temperature,
        softmin_neighbors=config.softmin_neighbors,
    )


def train_flow_for_scene(bundle, config=None, seed=0):
    config = config or FlowTrainingConfig.from_settings()
    return train_flow(bundle.demos, config, seed)


def similarity_weight(bundle, requested=None):
    """Grasp similarity weight; 0 when the scene file carries no human grasps."""
    if bundle.metadata.get('human_grasps_missing'):
        return 0.0
    return section('GRASP').get('lambda', 0.5) if requested is None else requested


def train_grasp_for_scene(bundle, config=None, gripper=None, count=200, holdout=0.3, seed=0,
                          lam=None, w_trans=None):
    """Sample candidates on the object cloud, train the classifier, build the scorer.

    Returns ``(scorer, candidates, heldout_report)``.
    """
    config = config or GraspTrainingConfig.from_settings()
    gripper = gripper or GripperSpec.from_settings()
    cloud = bundle.object_cloud
    positives = grasp_model.sample_antipodal_grasps(cloud, gripper, count, seed)
    hard, soft = grasp_model.make_negatives(positives, cloud, gripper, config, seed + 1)
    candidates = grasp_model.GraspCandidateSet(tuple(positives), tuple(hard), tuple(soft))
    if holdout > 0.0:
        train_set, test_set = grasp_model.split_candidates(candidates, holdout, seed)
    else:
        train_set, test_set = candidates, None
    bounds = grasp_model.EncodingBounds.around_cloud(cloud, inflation=config.soft_inflation + 0.5)
    net, auc = grasp_model.train_classifier(train_set, config.fourier_k, bounds, config, seed)
    report = grasp_model.evaluate_classifier(net, test_set, config.fourier_k, bounds) if test_set else {}
    w_trans = section('GRASP').get('w_trans', 0.5) if w_trans is None else w_trans
    scorer = grasp_model.GraspScorer(
        classifier=net,
        k=config.fourier_k,
        bounds=bounds,
        human_grasps=bundle.human_grasps,
        lam=similarity_weight(bundle, lam),
        weights=se3.DistanceWeights(w_trans),
        train_auc=auc,
    )
    return scorer, candidates, report


def scorer_for_scene(scorer, bundle):
    """Apply the scene's human grasps to a loaded scorer."""
    lam = similarity_weight(bundle, scorer.lam)
    return replace(scorer, human_grasps=bundle.human_grasps or scorer.human_grasps, lam=lam)


def run_method(method, bundle, arm, field, flow, scorer, weights, config, distance_weights=None):
    if method == 'joint':
        return optimizer.optimize(arm, field, flow, scorer, bundle.x0, weights, config=config)
    if method == 'sequential':
        return optimizer.optimize_sequential(arm, field, flow, scorer, bundle.x0, weights, config=config)
    if method == 'distance':
        return optimizer.optimize_distance_baseline(
            arm, field, bundle.demos, scorer, bundle.x0, weights, distance_weights, config=config,
        )
    raise ValueError(f'unknown method {method!r}; choose from {METHODS}')


def evaluate_against_scene(object_traj, bundle, flow=None, demo_index=None):
    """Metrics against ``demo_index`` or, by default, the nearest demo."""
    if demo_index is None:
        demo_index = optimizer.nearest_demo(object_traj, bundle.demos)
    record = optimizer.evaluate(object_traj, bundle.demos.demos[demo_index], flow)
    record['demo_index'] = int(demo_index)
    return record
