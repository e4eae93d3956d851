from jfto_app.artifacts import CANDIDATES_FILE, GRASP_FILE, require_scene, write_json
from jfto_app.conf import GraspTrainingConfig
from jfto_app.management.base import JftoCommand
from jfto_app.pipeline import train_grasp_for_scene


class Command(JftoCommand):
    help = 'Sample antipodal candidates on the object cloud, train the grasp classifier, write grasp.json.'
    subcommand = 'train-grasp'
    config_keys = ('scene', 'steps', 'lr', 'fourier_k', 'count', 'holdout', 'similarity_weight', 'w_trans')

    def add_command_arguments(self, parser):
        parser.add_argument('--scene', help='Scene file produced by synth.')
        parser.add_argument('--count', type=int, help='Positive grasps to sample (default 200).')
        parser.add_argument('--holdout', type=float, help='Held-out fraction for evaluation (default 0.3).')
        parser.add_argument('--steps', type=int, help='Classifier training iterations.')
        parser.add_argument('--lr', type=float, help='Adam learning rate.')
        parser.add_argument('--fourier-k', type=int, help='Fourier frequencies K; encoding length 12 K.')
        parser.add_argument('--lambda', dest='similarity_weight', type=float, help='Demo-similarity weight.')
        parser.add_argument('--w-trans', type=float, help='Translation weight of the pose distance.')

    def run(self, resolved, output_dir):
        bundle = require_scene(resolved.get('scene'))
        config = GraspTrainingConfig.from_settings(
            steps=resolved.get('steps'),
            lr=resolved.get('lr'),
            fourier_k=resolved.get('fourier_k'),
        )
        with self.timed('train'):
            scorer, candidates, report = train_grasp_for_scene(
                bundle,
                config,
                count=resolved.get('count', 200),
                holdout=resolved.get('holdout', 0.3),
                seed=resolved['seed'],
                lam=resolved.get('similarity_weight'),
                w_trans=resolved.get('w_trans'),
            )
        write_json(output_dir / GRASP_FILE, scorer.to_dict())
        write_json(output_dir / CANDIDATES_FILE, candidates.to_dict())
        return {
            'train_auc': scorer.train_auc,
            'heldout': report,
            'n_positive': len(candidates.positives),
            'n_hard': len(candidates.hard),
            'n_soft': len(candidates.soft),
            'lambda': scorer.lam,
        }
