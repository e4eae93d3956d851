"""Scripted comparisons behind ``manage.py reproduce``.

Both experiments build one scene and one set of trained models from
``first_seed`` and then vary only the optimizer seed, so the per-seed spread
reflects the search and not retraining noise.
"""

import logging

import numpy as np

from . import demo_io
from .arm_kinematics import body_point_positions, default_arm
from .artifacts import pose_rows
from .conf import FlowTrainingConfig, GraspTrainingConfig, OptimizerConfig
from .flow_density import density_slice
from .optimizer import ObjectiveWeights
from .pipeline import build_scene_field, evaluate_against_scene, run_method, train_flow_for_scene, train_grasp_for_scene
from .scene_field import min_clearance

logger = logging.getLogger(__name__)

EXPERIMENTS = ('multi-modal', 'joint-vs-sequential')
MODE_FRACTION = 0.25
PER_SEED_FIELDS = ['seed', 'method', 's_t', 's_g', 's_c', 'total', 'avg_log_density', 'delta_dist_avg', 'delta_rot_avg']
SLICE_FIELDS = ['x', 'y', 'log_density']


def prepare(bundle, seed, flow_steps=None, grasp_steps=None, grasp_count=200):
    flow = train_flow_for_scene(bundle, FlowTrainingConfig.from_settings(steps=flow_steps), seed)
    scorer, _, report = train_grasp_for_scene(
        bundle, GraspTrainingConfig.from_settings(steps=grasp_steps), count=grasp_count, seed=seed,
    )
    logger.info('trained flow (loss %.4f) and grasp classifier (held-out %s)', flow.final_loss, report)
    return flow, scorer


def mode_geometry(bundle, t):
    """Mode means, midpoint and separation of the two demo modes at step ``t``."""
    per_mode = bundle.metadata.get('n_per_mode', bundle.demos.n // 2)
    positions = np.array([p.translation for p in bundle.demos.poses_at(t)])
    modes = np.array([positions[:per_mode].mean(axis=0), positions[per_mode:].mean(axis=0)])
    midpoint = modes.mean(axis=0)
    return modes, midpoint, float(np.linalg.norm(modes[0] - modes[1]))


def classify_mid(object_traj, bundle):
    """Whether the path's mid-trajectory pose sits near a demo mode or near the midpoint."""
    t = bundle.horizon // 2
    modes, midpoint, separation = mode_geometry(bundle, t)
    position = object_traj[t].translation
    radius = MODE_FRACTION * separation
    return {
        'near_mode': bool(np.min(np.linalg.norm(modes - position, axis=1)) <= radius),
        'near_midpoint': bool(np.linalg.norm(position - midpoint) <= radius),
        'mid_offset': float(np.linalg.norm(position - midpoint)),
    }


def clearance_record(result, arm, field):
    """Collision score and smallest body-point clearance of a returned trajectory."""
    body = body_point_positions(arm, result.trajectory.states)
    clearance = min_clearance(field, body, arm.point_radii)
    return {
        's_c': result.score.s_c,
        'min_clearance': clearance,
        'collision_free': bool(result.score.s_c == 0.0 and clearance >= field.margin),
    }


def slice_rows(flow, bundle, t, resolution=40, padding=0.05):
    positions = np.array([p.translation for p in bundle.demos.poses_at(t)])
    bounds = (
        (positions[:, 0].min() - padding, positions[:, 0].max() + padding),
        (positions[:, 1].min() - padding, positions[:, 1].max() + padding),
    )
    xs, ys, values = density_slice(flow, t, dims=(0, 1), bounds=bounds, resolution=resolution)
    return [
        {'x': float(x), 'y': float(y), 'log_density': float(values[j, i])}
        for j, y in enumerate(ys)
        for i, x in enumerate(xs)
    ]


def _config(seed, batch, steps, workers):
    return OptimizerConfig.from_settings(seed=seed, batch=batch, steps=steps, workers=workers)


def run_multi_modal(seeds, first_seed=0, horizon=20, flow_steps=None, grasp_steps=None, grasp_count=200,
                    batch=None, steps=None, workers=None, arm=None):
    """Flow objective against the distance baseline on the two-mode obstacle scene.

    Returns ``(path_rows, slice_rows, summary)``.
    """
    bundle = demo_io.gen_bimodal_obstacle(horizon=horizon, seed=first_seed)
    arm = arm or default_arm()
    flow, scorer = prepare(bundle, first_seed, flow_steps, grasp_steps, grasp_count)
    field = build_scene_field(bundle)
    weights = ObjectiveWeights.from_settings()
    paths = []
    for index, traj in enumerate(bundle.demos.demos):
        paths.extend(pose_rows(f'demo_{index}', traj))
    per_seed = []
    for seed in seeds:
        config = _config(seed, batch, steps, workers)
        record = {'seed': seed}
        for method in ('joint', 'distance'):
            result = run_method(method, bundle, arm, field, flow, scorer, weights, config)
            paths.extend(pose_rows(f'{method}_seed_{seed}', result.object_traj))
            record[method] = {**classify_mid(result.object_traj, bundle), **clearance_record(result, arm, field)}
        logger.info('seed %d: flow %s, distance %s', seed, record['joint'], record['distance'])
        per_seed.append(record)
    _, _, separation = mode_geometry(bundle, bundle.horizon // 2)
    summary = {
        'experiment': 'multi-modal',
        'seeds': list(seeds),
        'mode_separation': separation,
        'flow_near_mode': sum(r['joint']['near_mode'] for r in per_seed),
        'flow_near_midpoint': sum(r['joint']['near_midpoint'] for r in per_seed),
        'distance_near_midpoint': sum(r['distance']['near_midpoint'] for r in per_seed),
        'flow_collision_free': sum(r['joint']['collision_free'] for r in per_seed),
        'min_clearance': min(r['joint']['min_clearance'] for r in per_seed),
        'per_seed': per_seed,
    }
    return paths, slice_rows(flow, bundle, bundle.horizon // 2), summary


def run_joint_vs_sequential(seeds, first_seed=0, horizon=20, flow_steps=None, grasp_steps=None, grasp_count=200,
                            batch=None, steps=None, workers=None, arm=None):
    """Joint against sequential optimization on the joint-limit conflict scene.

    Returns ``(per_seed_rows, summary)``.
    """
    bundle = demo_io.gen_limit_conflict(horizon=horizon, seed=first_seed)
    arm = arm or default_arm()
    flow, scorer = prepare(bundle, first_seed, flow_steps, grasp_steps, grasp_count)
    field = build_scene_field(bundle)
    weights = ObjectiveWeights.from_settings()
    rows = []
    joint_wins = 0
    for seed in seeds:
        config = _config(seed, batch, steps, workers)
        metrics = {}
        for method in ('joint', 'sequential'):
            result = run_method(method, bundle, arm, field, flow, scorer, weights, config)
            metrics[method] = evaluate_against_scene(result.object_traj, bundle, flow)
            score = result.score
            rows.append({
                'seed': seed,
                'method': method,
                's_t': score.s_t,
                's_g': score.s_g,
                's_c': score.s_c,
                'total': score.total,
                'avg_log_density': metrics[method]['avg_log_density'],
                'delta_dist_avg': metrics[method]['delta_dist_avg'],
                'delta_rot_avg': metrics[method]['delta_rot_avg'],
            })
        joint_wins += metrics['joint']['avg_log_density'] > metrics['sequential']['avg_log_density']
        logger.info('seed %d: joint %.3f vs sequential %.3f avg log density', seed,
                    metrics['joint']['avg_log_density'], metrics['sequential']['avg_log_density'])

    def mean(method, key):
        return float(np.mean([r[key] for r in rows if r['method'] == method]))

    summary = {
        'experiment': 'joint-vs-sequential',
        'seeds': list(seeds),
        'joint_density_wins': int(joint_wins),
        'mean_avg_log_density': {m: mean(m, 'avg_log_density') for m in ('joint', 'sequential')},
        'mean_delta_dist_avg': {m: mean(m, 'delta_dist_avg') for m in ('joint', 'sequential')},
        'mean_delta_rot_avg': {m: mean(m, 'delta_rot_avg') for m in ('joint', 'sequential')},
    }
    return rows, summary
