"""Bookkeeping for one CLI run: a ``RunManifest`` row plus ``manifest.json``."""

import json
import logging
import time
from pathlib import Path

from django.core.management import call_command
from django.db import connection
from django.utils import timezone

from .models import RunManifest
from .serializers import RunManifestSerializer

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'


def ensure_schema():
    """Create the run table on first use of a fresh database."""
    if RunManifest._meta.db_table not in connection.introspection.table_names():
        logger.info('migrating run database %s', connection.settings_dict['NAME'])
        call_command('migrate', verbosity=0, interactive=False)


class RunRecorder:
    def __init__(self, subcommand, output_dir, config=None, config_path='', seed=None, inputs=None):
        ensure_schema()
        self.output_dir = Path(output_dir)
        self.manifest = RunManifest.objects.create(
            subcommand=subcommand,
            output_dir=str(self.output_dir),
            config=config or {},
            config_path=str(config_path or ''),
            seed=seed,
            inputs=inputs or {},
        )
        self._started = time.perf_counter()
        self._marks = {}
        logger.info('run %s: %s -> %s', self.manifest.id, subcommand, self.output_dir)

    def configure(self, config, seed=None):
        self.manifest.config = config
        self.manifest.seed = seed
        self.manifest.save(update_fields=['config', 'seed', 'updated_at'])

    def mark(self, name, seconds):
        self._marks[name] = round(float(seconds), 6)

    def _close(self, status, scores=None, error=None):
        self.manifest.status = status
        self.manifest.scores = scores or {}
        self.manifest.error = error
        self.manifest.timings = {**self._marks, 'total_s': round(time.perf_counter() - self._started, 6)}
        self.manifest.finished_at = timezone.now()
        self.manifest.save()
        self.write_manifest()
        return self.manifest

    def succeed(self, scores=None):
        return self._close(RunManifest.STATUS_SUCCEEDED, scores=scores)

    def fail(self, error):
        return self._close(RunManifest.STATUS_FAILED, error=error)

    def write_manifest(self):
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / MANIFEST_NAME
        with open(path, 'w') as handle:
            json.dump(RunManifestSerializer(self.manifest).data, handle, indent=2, default=str)
        return path
