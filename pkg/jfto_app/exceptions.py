"""Errors raised by the planning library.

Every error carries a stable ``code`` so the CLI can emit a machine-readable
record (see ``JftoError.as_record``).
"""


class JftoError(Exception):
    code = 'jfto_error'

    def __init__(self, message='', **details):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__
        self.details = details

    def as_record(self):
        return {'error': self.code, 'message': self.message, 'details': self.details}


class ChartSingularity(JftoError):
    code = 'chart_singularity'


class ShapeMismatch(JftoError):
    code = 'shape_mismatch'


class DegenerateDemos(JftoError):
    code = 'degenerate_demos'


class NoGraspsFound(JftoError):
    code = 'no_grasps_found'


class DegenerateNoise(JftoError):
    code = 'degenerate_noise'


class EmptyDemoGrasps(JftoError):
    code = 'empty_demo_grasps'


class EmptyCloud(JftoError):
    code = 'empty_cloud'


class JointLimit(JftoError):
    code = 'joint_limit'


class EmptyDemoSet(JftoError):
    code = 'empty_demo_set'


class LengthMismatch(JftoError):
    code = 'length_mismatch'


class SchemaVersionMismatch(JftoError):
    code = 'schema_version_mismatch'


class ValidationFailure(JftoError):
    code = 'validation_failure'

    def __init__(self, message='', field_path='', **details):
        super().__init__(message, field_path=field_path, **details)
        self.field_path = field_path

    @classmethod
    def from_serializer_errors(cls, errors, prefix=''):
        """Flatten DRF ``serializer.errors`` into the first failing field path."""
        path, message = _first_error(errors, prefix)
        return cls(f'{path}: {message}' if path else message, field_path=path)


class MissingArtifact(JftoError):
    code = 'missing_artifact'

    def __init__(self, producer, path=''):
        what = f'missing artifact {path}' if path else 'missing artifact'
        super().__init__(f'{what} (run `{producer}` first)', producer=producer, path=str(path))
        self.producer = producer


def _first_error(errors, prefix):
    if isinstance(errors, dict):
        for key, value in errors.items():
            if key == 'non_field_errors':
                return _first_error(value, prefix)
            if isinstance(key, int):
                child = f'{prefix}[{key}]'
            else:
                child = f'{prefix}.{key}' if prefix else str(key)
            return _first_error(value, child)
    if isinstance(errors, list):
        # ListField reports per-index errors as a dict, plain fields as a list of strings
        for index, value in enumerate(errors):
            if isinstance(value, (dict, list)) and value:
                return _first_error(value, f'{prefix}[{index}]')
            if value:
                return prefix, str(value)
    return prefix, str(errors)
