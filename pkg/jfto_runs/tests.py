import json
import tempfile
from pathlib import Path

from django.test import TestCase

from .models import RunManifest
from .recorder import MANIFEST_NAME, RunRecorder


class RunRecorderTests(TestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.output_dir = Path(tmp.name) / 'run'

    def read_manifest(self):
        with open(self.output_dir / MANIFEST_NAME) as handle:
            return json.load(handle)

    def test_new_run_is_running(self):
        recorder = RunRecorder('synth', self.output_dir, inputs={'scene': None})
        row = RunManifest.objects.get(pk=recorder.manifest.pk)
        self.assertEqual(row.status, RunManifest.STATUS_RUNNING)
        self.assertEqual(row.subcommand, 'synth')
        self.assertEqual(row.config, {})
        self.assertIsNone(row.finished_at)
        self.assertFalse((self.output_dir / MANIFEST_NAME).exists())

    def test_configure_stores_resolved_config(self):
        recorder = RunRecorder('optimize', self.output_dir, config_path='cfg.json')
        recorder.configure({'steps': 5, 'seed': 7}, seed=7)
        row = RunManifest.objects.get(pk=recorder.manifest.pk)
        self.assertEqual(row.config, {'steps': 5, 'seed': 7})
        self.assertEqual(row.seed, 7)
        self.assertEqual(row.config_path, 'cfg.json')

    def test_succeed_writes_manifest(self):
        recorder = RunRecorder('train-flow', self.output_dir)
        recorder.configure({'seed': 0}, seed=0)
        recorder.mark('train_s', 1.25)
        recorder.succeed({'final_loss': 0.5})

        manifest = self.read_manifest()
        self.assertEqual(manifest['id'], str(recorder.manifest.pk))
        self.assertEqual(manifest['status'], RunManifest.STATUS_SUCCEEDED)
        self.assertEqual(manifest['scores'], {'final_loss': 0.5})
        self.assertIsNone(manifest['error'])
        self.assertEqual(manifest['timings']['train_s'], 1.25)
        self.assertGreaterEqual(manifest['timings']['total_s'], 0.0)
        self.assertIsNotNone(manifest['finished_at'])

    def test_fail_records_error(self):
        recorder = RunRecorder('optimize', self.output_dir)
        record = {'error': 'missing_artifact', 'message': 'missing artifact', 'details': {'producer': 'train-flow'}}
        recorder.fail(record)

        row = RunManifest.objects.get(pk=recorder.manifest.pk)
        self.assertEqual(row.status, RunManifest.STATUS_FAILED)
        self.assertEqual(row.error, record)
        self.assertEqual(row.scores, {})
        self.assertEqual(self.read_manifest()['error']['details']['producer'], 'train-flow')

    def test_each_recorder_adds_a_row(self):
        first = RunRecorder('synth', self.output_dir / 'a')
        RunRecorder('synth', self.output_dir / 'b')
        self.assertEqual(RunManifest.objects.filter(subcommand='synth').count(), 2)
        self.assertIn('synth', str(first.manifest))
