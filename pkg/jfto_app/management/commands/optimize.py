from pathlib import Path

from jfto_app import se3
from jfto_app.arm_kinematics import default_arm, load_arm
from jfto_app.artifacts import (
    RESULT_FILE, TRACE_FILE, require_flow, require_grasp, require_scene, trajectory_payload, write_csv, write_json,
)
from jfto_app.conf import OptimizerConfig, SceneConfig, section
from jfto_app.exceptions import LengthMismatch, ValidationFailure
from jfto_app.management.base import JftoCommand
from jfto_app.optimizer import ObjectiveWeights
from jfto_app.pipeline import METHODS, build_scene_field, evaluate_against_scene, run_method, scorer_for_scene
from jfto_app.scene_field import load_points


class Command(JftoCommand):
    help = 'Optimize a grasp and joint trajectory for a scene (joint, sequential or distance objective).'
    subcommand = 'optimize'
    config_keys = (
        'scene', 'flow', 'grasp', 'arm', 'method', 'alpha', 'beta', 'gamma', 'batch', 'steps', 'lr',
        'workers', 'gradient', 'density_steps', 'init_candidates', 'init', 'distance_scale', 'max_joint_step', 'w_trans',
        'margin', 'background',
    )

    def add_command_arguments(self, parser):
        parser.add_argument('--scene', help='Scene file produced by synth.')
        parser.add_argument('--flow', help='Flow checkpoint produced by train-flow.')
        parser.add_argument('--grasp', help='Grasp checkpoint produced by train-grasp.')
        parser.add_argument('--arm', help='Arm description JSON (default: bundled 6-DoF arm).')
        parser.add_argument('--method', choices=METHODS, help='Objective (default joint).')
        parser.add_argument('--alpha', type=float, help='Trajectory weight.')
        parser.add_argument('--beta', type=float, help='Grasp weight.')
        parser.add_argument('--gamma', type=float, help='Collision weight.')
        parser.add_argument('--batch', type=int, help='Candidates ascended in parallel.')
        parser.add_argument('--steps', type=int, help='Adam iterations (per stage for sequential).')
        parser.add_argument('--lr', type=float, help='Adam learning rate.')
        parser.add_argument('--workers', type=int, help='Threads splitting the batch.')
        parser.add_argument('--gradient', choices=('fd', 'analytic'), help='Chart Jacobian mode.')
        parser.add_argument('--density-steps', type=int, help='RK4 steps per log-density evaluation.')
        parser.add_argument('--init-candidates', type=int, help='Random configurations screened for the initial batch.')
        parser.add_argument('--init', choices=('proposal', 'constant'),
                            help='Initial trajectories: IK onto sampled object paths, or held at the start state.')
        parser.add_argument('--distance-scale', type=float, help='Length scale of the distance objective, meters.')
        parser.add_argument('--max-joint-step', type=float, help='Cap on per-joint change between states, radians.')
        parser.add_argument('--w-trans', type=float, help='Translation weight of the distance objective.')
        parser.add_argument('--margin', type=float, help='Collision safety margin in meters (default 0.01).')
        parser.add_argument('--background', help='Extra background cloud: JSON array or float32 XYZ file.')

    def run(self, resolved, output_dir):
        method = resolved.get('method', 'joint')
        bundle = require_scene(resolved.get('scene'))
        flow = None
        if method != 'distance' or resolved.get('flow'):
            flow = require_flow(resolved.get('flow'))
            if flow.horizon != bundle.horizon:
                raise LengthMismatch(f'flow horizon {flow.horizon} does not match scene horizon {bundle.horizon}')
        scorer = scorer_for_scene(require_grasp(resolved.get('grasp')), bundle)
        arm = load_arm(Path(resolved['arm'])) if resolved.get('arm') else default_arm()

        try:
            weights = ObjectiveWeights.from_settings(
                alpha=resolved.get('alpha'), beta=resolved.get('beta'), gamma=resolved.get('gamma'),
            )
            config = OptimizerConfig.from_settings(
                seed=resolved['seed'],
                batch=resolved.get('batch'),
                steps=resolved.get('steps'),
                lr=resolved.get('lr'),
                workers=resolved.get('workers'),
                gradient=resolved.get('gradient'),
                density_steps=resolved.get('density_steps'),
                init_candidates=resolved.get('init_candidates'),
                init=resolved.get('init'),
                distance_scale=resolved.get('distance_scale'),
                max_joint_step=resolved.get('max_joint_step'),
            )
        except ValueError as exc:
            raise ValidationFailure(str(exc), field_path='optimizer') from exc
        w_trans = resolved.get('w_trans', section('GRASP').get('w_trans', 0.5))

        extra = None
        if resolved.get('background'):
            if not Path(resolved['background']).exists():
                raise ValidationFailure(f'background cloud {resolved["background"]} does not exist', field_path='background')
            extra = load_points(resolved['background'])
        field = build_scene_field(bundle, SceneConfig.from_settings(margin=resolved.get('margin')), extra)
        with self.timed('optimize'):
            result = run_method(
                method, bundle, arm, field, flow, scorer, weights, config,
                distance_weights=se3.DistanceWeights(w_trans),
            )
        with self.timed('evaluate'):
            metrics = evaluate_against_scene(result.object_traj, bundle, flow)

        payload = trajectory_payload(result)
        payload.update(method=method, capped=result.capped, metrics=metrics, member_totals=list(result.member_totals))
        write_json(output_dir / RESULT_FILE, payload)
        write_csv(output_dir / TRACE_FILE, result.trace_rows(), ['step', 'best_total'])
        return {'method': method, **result.score.as_dict(), **metrics}
