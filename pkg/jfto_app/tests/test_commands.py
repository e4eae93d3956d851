import copy
import csv
import json
import tempfile
from io import StringIO
from pathlib import Path

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase, override_settings, tag

from jfto_runs.models import RunManifest


def small_jfto():
    jfto = copy.deepcopy(settings.JFTO)
    jfto['DEMOS']['horizon'] = 4
    jfto['FLOW'].update(widths=[8, 16, 6], steps=40, batch=16, ode_steps=4)
    jfto['GRASP'].update(widths_hidden=[16], steps=40, batch=32)
    jfto['OPTIMIZER'].update(batch=2, steps=2, init_candidates=16, density_steps=2)
    return jfto


def read_json(path):
    with open(path) as handle:
        return json.load(handle)


@override_settings(JFTO=small_jfto())
class CommandTestCase(TestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = Path(tmp.name)

    def run_command(self, name, output, *args, **options):
        out, err = StringIO(), StringIO()
        call_command(name, *args, output=str(self.tmp / output), stdout=out, stderr=err, **options)
        return self.tmp / output


class PipelineCommandTests(CommandTestCase):
    def test_synth_writes_scene_and_manifest(self):
        out = self.run_command('synth', 'synth', task='arc', n=3, seed=4)
        scene = read_json(out / 'scene.json')
        self.assertEqual(len(scene['demos']), 3)
        self.assertEqual(len(scene['demos'][0]), 5)

        manifest = read_json(out / 'manifest.json')
        self.assertEqual(manifest['subcommand'], 'synth')
        self.assertEqual(manifest['status'], RunManifest.STATUS_SUCCEEDED)
        self.assertEqual(manifest['seed'], 4)
        self.assertEqual(manifest['scores']['n_demos'], 3)
        self.assertIn('total_s', manifest['timings'])

        row = RunManifest.objects.get(output_dir=str(out))
        self.assertEqual(row.config['task'], 'arc')

    def test_full_pipeline(self):
        synth = self.run_command('synth', 'synth', n=4)
        scene = str(synth / 'scene.json')
        flow = self.run_command('train_flow', 'flow', scene=scene)
        grasp = self.run_command('train_grasp', 'grasp', scene=scene, count=20)
        self.assertTrue((flow / 'flow.json').exists())
        self.assertTrue((grasp / 'candidates.json').exists())
        grasp_scores = read_json(grasp / 'manifest.json')['scores']
        self.assertEqual(grasp_scores['n_positive'], 20)
        self.assertEqual(grasp_scores['lambda'], 0.5)

        opt = self.run_command(
            'optimize', 'opt', scene=scene, flow=str(flow / 'flow.json'), grasp=str(grasp / 'grasp.json'),
        )
        result = read_json(opt / 'result.json')
        self.assertEqual(result['method'], 'joint')
        self.assertEqual(len(result['object_traj']), 5)
        self.assertEqual(len(result['joint_traj']), 5)
        self.assertEqual(len(result['member_totals']), 2)
        score = result['score']
        self.assertAlmostEqual(score['total'], 0.5 * score['s_t'] + 0.8 * score['s_g'] - 1.0 * score['s_c'], places=9)
        with open(opt / 'trace.csv') as handle:
            trace = list(csv.DictReader(handle))
        self.assertEqual(len(trace), 3)

        metrics_dir = self.run_command('evaluate', 'eval', exec=str(opt / 'result.json'), scene=scene, demo_index=1)
        metrics = read_json(metrics_dir / 'metrics.json')
        self.assertEqual(metrics['demo_index'], 1)
        self.assertIsNone(metrics['avg_log_density'])
        self.assertGreaterEqual(metrics['delta_dist_avg'], 0.0)

    def test_distance_method_without_flow(self):
        scene = str(self.run_command('synth', 'synth', n=3) / 'scene.json')
        grasp = self.run_command('train_grasp', 'grasp', scene=scene, count=20, holdout=0.0)
        cloud = self.tmp / 'extra.json'
        cloud.write_text(json.dumps([[5.0, 5.0, 5.0]]))
        opt = self.run_command(
            'optimize', 'opt', scene=scene, grasp=str(grasp / 'grasp.json'), method='distance',
            margin=0.02, background=str(cloud),
        )
        result = read_json(opt / 'result.json')
        self.assertEqual(result['method'], 'distance')
        manifest = read_json(opt / 'manifest.json')
        self.assertEqual(manifest['config']['margin'], 0.02)
        self.assertEqual(manifest['inputs']['background'], str(cloud))
        self.assertLessEqual(result['score']['s_t'], 0.0)


class CommandErrorTests(CommandTestCase):
    def test_optimize_without_flow_checkpoint(self):
        scene = str(self.run_command('synth', 'synth', n=3) / 'scene.json')
        with self.assertRaises(CommandError) as ctx:
            self.run_command('optimize', 'opt', scene=scene, grasp=str(self.tmp / 'nope.json'))
        self.assertEqual(ctx.exception.returncode, 2)
        error = read_json(self.tmp / 'opt' / 'error.json')
        self.assertEqual(error['error'], 'missing_artifact')
        self.assertEqual(error['details']['producer'], 'train-flow')

        row = RunManifest.objects.get(output_dir=str(self.tmp / 'opt'))
        self.assertEqual(row.status, RunManifest.STATUS_FAILED)
        self.assertEqual(row.error['error'], 'missing_artifact')

    def test_train_flow_without_scene(self):
        with self.assertRaises(CommandError):
            self.run_command('train_flow', 'flow')
        error = read_json(self.tmp / 'flow' / 'error.json')
        self.assertEqual(error['details']['producer'], 'synth')

    def test_evaluate_needs_a_reference(self):
        with self.assertRaises(CommandError):
            self.run_command('evaluate', 'eval', exec=str(self.tmp / 'missing.json'))
        self.assertEqual(read_json(self.tmp / 'eval' / 'error.json')['error'], 'missing_artifact')

    def test_invalid_config_file(self):
        config = self.tmp / 'config.json'
        config.write_text(json.dumps({'steps': 0}))
        with self.assertRaises(CommandError):
            self.run_command('synth', 'synth', config=str(config))
        error = read_json(self.tmp / 'synth' / 'error.json')
        self.assertEqual(error['error'], 'validation_failure')
        self.assertEqual(error['details']['field_path'], 'steps')

    def test_missing_config_file(self):
        with self.assertRaises(CommandError):
            self.run_command('synth', 'synth', config=str(self.tmp / 'absent.json'))
        self.assertEqual(read_json(self.tmp / 'synth' / 'error.json')['details']['field_path'], 'config')


class ConfigPrecedenceTests(CommandTestCase):
    def test_flag_overrides_config_file(self):
        config = self.tmp / 'config.json'
        config.write_text(json.dumps({'task': 'figure8', 'n': 6, 'seed': 3}))
        out = self.run_command('synth', 'synth', config=str(config), n=2)
        manifest = read_json(out / 'manifest.json')
        self.assertEqual(manifest['config']['task'], 'figure8')
        self.assertEqual(manifest['config']['n'], 2)
        self.assertEqual(manifest['seed'], 3)
        self.assertEqual(manifest['config_path'], str(config))
        self.assertEqual(len(read_json(out / 'scene.json')['demos']), 2)

    def test_seed_defaults_to_zero(self):
        out = self.run_command('synth', 'synth', n=2)
        self.assertEqual(read_json(out / 'manifest.json')['seed'], 0)


class EvaluateCommandTests(CommandTestCase):
    def test_identical_trajectories(self):
        scene = str(self.run_command('synth', 'synth', n=3) / 'scene.json')
        grasp = self.run_command('train_grasp', 'grasp', scene=scene, count=20, holdout=0.0)
        opt = self.run_command('optimize', 'opt', scene=scene, grasp=str(grasp / 'grasp.json'), method='distance')
        result = str(opt / 'result.json')
        metrics = read_json(self.run_command('evaluate', 'eval', exec=result, demo=result) / 'metrics.json')
        self.assertAlmostEqual(metrics['delta_dist_avg'], 0.0, places=9)
        self.assertAlmostEqual(metrics['delta_rot_avg'], 0.0, places=6)


@tag('slow')
class ReproduceCommandTests(CommandTestCase):
    def test_joint_vs_sequential(self):
        out = self.run_command(
            'reproduce', 'repro', 'joint-vs-sequential', seeds=2, horizon=4, grasp_count=20, steps=2, batch=2,
        )
        with open(out / 'per_seed.csv') as handle:
            rows = list(csv.DictReader(handle))
        self.assertEqual(len(rows), 4)
        self.assertEqual({r['method'] for r in rows}, {'joint', 'sequential'})
        summary = read_json(out / 'summary.json')
        self.assertEqual(summary['seeds'], [0, 1])
        self.assertLessEqual(summary['joint_density_wins'], 2)

    def test_multi_modal(self):
        out = self.run_command('reproduce', 'repro', 'multi-modal', seeds=1, horizon=4, grasp_count=20, steps=2)
        summary = read_json(out / 'summary.json')
        self.assertEqual(summary['experiment'], 'multi-modal')
        self.assertEqual(len(summary['per_seed']), 1)
        self.assertNotIn('per_seed', read_json(out / 'manifest.json')['scores'])
        with open(out / 'density_slice.csv') as handle:
            self.assertEqual(len(list(csv.DictReader(handle))), 40 * 40)
        with open(out / 'paths.csv') as handle:
            series = {row['series'] for row in csv.DictReader(handle)}
        self.assertIn('joint_seed_0', series)
        self.assertIn('distance_seed_0', series)
