from jfto_app.artifacts import POSE_ROW_FIELDS, write_csv, write_json
from jfto_app.experiments import EXPERIMENTS, PER_SEED_FIELDS, SLICE_FIELDS, run_joint_vs_sequential, run_multi_modal
from jfto_app.management.base import JftoCommand


class Command(JftoCommand):
    help = 'Rerun a comparison experiment and write its plot data (CSV) and summary.json.'
    subcommand = 'reproduce'
    config_keys = (
        'experiment', 'seeds', 'first_seed', 'flow_steps', 'grasp_steps', 'grasp_count',
        'steps', 'batch', 'horizon', 'workers',
    )

    def add_command_arguments(self, parser):
        parser.add_argument('experiment', choices=EXPERIMENTS)
        parser.add_argument('--seeds', type=int, help='Optimizer seeds to run (default 10).')
        parser.add_argument('--first-seed', type=int, help='Seed for the scene and model training (default 0).')
        parser.add_argument('--flow-steps', type=int, help='Flow training iterations.')
        parser.add_argument('--grasp-steps', type=int, help='Grasp classifier training iterations.')
        parser.add_argument('--grasp-count', type=int, help='Positive grasps sampled (default 200).')
        parser.add_argument('--steps', type=int, help='Optimizer iterations.')
        parser.add_argument('--batch', type=int, help='Optimizer batch size.')
        parser.add_argument('--horizon', type=int, help='Timesteps T of the generated scene.')
        parser.add_argument('--workers', type=int, help='Threads splitting the optimizer batch.')

    def run(self, resolved, output_dir):
        first_seed = resolved.get('first_seed', resolved['seed'])
        seeds = list(range(first_seed, first_seed + resolved.get('seeds', 10)))
        kwargs = dict(
            first_seed=first_seed,
            horizon=resolved.get('horizon', 20),
            flow_steps=resolved.get('flow_steps'),
            grasp_steps=resolved.get('grasp_steps'),
            grasp_count=resolved.get('grasp_count', 200),
            batch=resolved.get('batch'),
            steps=resolved.get('steps'),
            workers=resolved.get('workers'),
        )
        if resolved['experiment'] == 'multi-modal':
            with self.timed('multi_modal'):
                paths, density, summary = run_multi_modal(seeds, **kwargs)
            write_csv(output_dir / 'paths.csv', paths, POSE_ROW_FIELDS)
            write_csv(output_dir / 'density_slice.csv', density, SLICE_FIELDS)
        else:
            with self.timed('joint_vs_sequential'):
                rows, summary = run_joint_vs_sequential(seeds, **kwargs)
            write_csv(output_dir / 'per_seed.csv', rows, PER_SEED_FIELDS)
        write_json(output_dir / 'summary.json', summary)
        return {k: v for k, v in summary.items() if k != 'per_seed'}
