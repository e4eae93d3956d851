from jfto_app.artifacts import METRICS_FILE, load_object_traj, require_flow, require_scene, write_json
from jfto_app.exceptions import MissingArtifact, ValidationFailure
from jfto_app.management.base import JftoCommand
from jfto_app.optimizer import evaluate
from jfto_app.pipeline import evaluate_against_scene


class Command(JftoCommand):
    help = 'Compare an executed object trajectory with a demonstration and write metrics.json.'
    subcommand = 'evaluate'
    config_keys = ('exec', 'demo', 'scene', 'demo_index', 'flow')

    def add_command_arguments(self, parser):
        parser.add_argument('--exec', help='Trajectory file (result.json) to evaluate.')
        parser.add_argument('--demo', help='Trajectory file holding the reference demo.')
        parser.add_argument('--scene', help='Scene file; compare against its demos instead of --demo.')
        parser.add_argument('--demo-index', type=int, help='Scene demo to compare against (default: nearest).')
        parser.add_argument('--flow', help='Flow checkpoint for the average log-density.')

    def input_keys(self):
        return ('exec', 'demo', 'scene', 'flow')

    def run(self, resolved, output_dir):
        executed = load_object_traj(resolved.get('exec'))
        flow = require_flow(resolved['flow']) if resolved.get('flow') else None
        with self.timed('evaluate'):
            if resolved.get('demo'):
                metrics = evaluate(executed, load_object_traj(resolved['demo'], producer='demo'), flow)
            elif resolved.get('scene'):
                bundle = require_scene(resolved['scene'])
                index = resolved.get('demo_index')
                if index is not None and not 0 <= index < bundle.demos.n:
                    raise ValidationFailure(
                        f'demo index {index} out of range for {bundle.demos.n} demos', field_path='demo_index',
                    )
                metrics = evaluate_against_scene(executed, bundle, flow, index)
            else:
                raise MissingArtifact('synth', '--demo or --scene')
        write_json(output_dir / METRICS_FILE, metrics)
        return metrics
