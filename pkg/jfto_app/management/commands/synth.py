from jfto_app import demo_io
from jfto_app.artifacts import SCENE_FILE
from jfto_app.conf import section
from jfto_app.management.base import JftoCommand

TASKS = demo_io.SHAPES + ('bimodal', 'limit_conflict')


class Command(JftoCommand):
    help = 'Generate a synthetic demonstration scene (scene.json).'
    subcommand = 'synth'
    config_keys = ('task', 'n', 'horizon', 'noise', 'gap')

    def add_command_arguments(self, parser):
        parser.add_argument('--task', choices=TASKS, help='Task shape (default line).')
        parser.add_argument('--n', type=int, help='Demos (per mode for bimodal; default 10, 5 per mode).')
        parser.add_argument('--horizon', type=int, help='Timesteps T; demos have T + 1 poses.')
        parser.add_argument('--noise', type=float, help='Translation noise sigma in meters.')
        parser.add_argument('--gap', type=float, help='Mode separation for the bimodal task, meters.')

    def run(self, resolved, output_dir):
        defaults = section('DEMOS')
        task = resolved.get('task', 'line')
        n = resolved.get('n', 5 if task == 'bimodal' else 10)
        with self.timed('generate'):
            bundle = demo_io.generate(
                task,
                seed=resolved['seed'],
                n=n,
                horizon=resolved.get('horizon', defaults.get('horizon', 20)),
                noise=resolved.get('noise', defaults.get('noise')),
                gap=resolved.get('gap', defaults.get('gap')) if task == 'bimodal' else None,
            )
        demo_io.save_scene(bundle, output_dir / SCENE_FILE)
        return {'task': bundle.task, 'n_demos': bundle.demos.n, 'horizon': bundle.horizon}
