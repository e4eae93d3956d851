import numpy as np

from jfto_app.artifacts import FLOW_FILE, require_scene, write_json
from jfto_app.conf import FlowTrainingConfig
from jfto_app.management.base import JftoCommand
from jfto_app.optimizer import trajectory_score
from jfto_app.pipeline import train_flow_for_scene


class Command(JftoCommand):
    help = 'Train the demonstration flow on a scene and write flow.json.'
    subcommand = 'train-flow'
    config_keys = ('scene', 'steps', 'batch', 'lr', 'ode_steps')

    def add_command_arguments(self, parser):
        parser.add_argument('--scene', help='Scene file produced by synth.')
        parser.add_argument('--steps', type=int, help='Training iterations.')
        parser.add_argument('--batch', type=int, help='Minibatch size.')
        parser.add_argument('--lr', type=float, help='Adam learning rate.')
        parser.add_argument('--ode-steps', type=int, help='RK4 steps for sampling and density.')

    def run(self, resolved, output_dir):
        bundle = require_scene(resolved.get('scene'))
        config = FlowTrainingConfig.from_settings(
            steps=resolved.get('steps'),
            batch=resolved.get('batch'),
            lr=resolved.get('lr'),
            ode_steps=resolved.get('ode_steps'),
        )
        with self.timed('train'):
            model = train_flow_for_scene(bundle, config, resolved['seed'])
        write_json(output_dir / FLOW_FILE, model.to_dict())
        with self.timed('self_score'):
            self_scores = [trajectory_score(model, traj) for traj in bundle.demos.demos]
        return {
            'final_loss': float(model.final_loss),
            'demo_self_score_mean': float(np.mean(self_scores)),
            'horizon': model.horizon,
        }
