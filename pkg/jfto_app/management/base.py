"""Shared plumbing for the planner's management commands.

Every command resolves its configuration (flags > ``--config`` file >
settings), records a ``RunManifest``, writes its artifacts plus
``manifest.json`` into the output directory, and turns a ``JftoError`` into
``error.json``, a JSON record on stderr and exit status 2.
"""

import json
import logging
import time
from contextlib import contextmanager
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone

from jfto_app.artifacts import ERROR_FILE, read_json, write_json
from jfto_app.conf import output_root
from jfto_app.exceptions import JftoError, ValidationFailure
from jfto_app.serializers import RunConfigSerializer, load_payload
from jfto_runs.recorder import RunRecorder

logger = logging.getLogger(__name__)


class JftoCommand(BaseCommand):
    subcommand = ''
    # option names that may also come from the --config file
    config_keys = ()

    def add_arguments(self, parser):
        parser.add_argument('--output', help='Output directory (default: $JFTO_OUTPUT_ROOT/<command>-<timestamp>).')
        parser.add_argument('--config', help='JSON run config; command-line flags override its values.')
        parser.add_argument('--seed', type=int, help='Random seed (default 0).')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def resolve(self, options):
        resolved = {}
        if options.get('config'):
            path = Path(options['config'])
            if not path.exists():
                raise ValidationFailure(f'config file {path} does not exist', field_path='config')
            resolved.update(load_payload(RunConfigSerializer, read_json(path)))
        for key in ('seed',) + tuple(self.config_keys):
            if options.get(key) is not None:
                resolved[key] = options[key]
        resolved.setdefault('seed', 0)
        return resolved

    def output_dir(self, options):
        if options.get('output'):
            return Path(options['output'])
        stamp = timezone.now().strftime('%Y%m%d-%H%M%S-%f')
        return output_root() / f'{self.subcommand}-{stamp}'

    @contextmanager
    def timed(self, name):
        start = time.perf_counter()
        yield
        self.recorder.mark(f'{name}_s', time.perf_counter() - start)

    def handle(self, *args, **options):
        output_dir = self.output_dir(options)
        self.recorder = RunRecorder(
            self.subcommand,
            output_dir,
            config_path=options.get('config') or '',
            inputs={k: v for k, v in options.items() if k in self.input_keys()},
        )
        try:
            resolved = self.resolve(options)
            self.recorder.configure(resolved, resolved['seed'])
            scores = self.run(resolved, output_dir)
        except JftoError as exc:
            record = exc.as_record()
            write_json(output_dir / ERROR_FILE, record)
            self.recorder.fail(record)
            self.stderr.write(json.dumps(record))
            raise CommandError(exc.message, returncode=2) from exc
        self.recorder.succeed(scores)
        self.stdout.write(self.style.SUCCESS(f'{self.subcommand}: artifacts in {output_dir}'))

    def input_keys(self):
        return ('scene', 'flow', 'grasp', 'exec', 'demo', 'arm', 'background')

    def run(self, resolved, output_dir):
        raise NotImplementedError
