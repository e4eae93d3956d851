"""Typed views of the ``JFTO`` settings dict.

Each config is a frozen dataclass built with ``from_settings(**overrides)``;
overrides that are ``None`` fall through to the settings value.
"""

from dataclasses import dataclass, fields
from pathlib import Path

from django.conf import settings


def section(name):
    return dict(settings.JFTO.get(name, {}))


class SettingsConfig:
    settings_section = ''

    @classmethod
    def from_settings(cls, **overrides):
        values = section(cls.settings_section)
        names = {f.name for f in fields(cls)}
        values = {k: v for k, v in values.items() if k in names}
        values.update({k: v for k, v in overrides.items() if v is not None and k in names})
        return cls(**values)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class FlowTrainingConfig(SettingsConfig):
    settings_section = 'FLOW'

    widths: tuple = (8, 64, 64, 6)
    steps: int = 4000
    batch: int = 128
    lr: float = 1e-3
    ode_steps: int = 40
    min_scale: float = 1e-3
    recenter_angle: float = 2.5


@dataclass(frozen=True)
class GripperSpec(SettingsConfig):
    """Parallel-jaw gripper: opening ``width`` along y, finger ``depth`` along the approach z."""

    width: float = 0.08
    depth: float = 0.05
    finger_width: float = 0.02
    finger_thickness: float = 0.01
    palm_thickness: float = 0.02
    antipodal_tolerance_deg: float = 30.0
    center_tolerance: float = 0.003

    @classmethod
    def from_settings(cls, **overrides):
        values = section('GRASP').get('gripper', {})
        values = {**values, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**values)


@dataclass(frozen=True)
class GraspTrainingConfig(SettingsConfig):
    settings_section = 'GRASP'

    widths_hidden: tuple = (128, 64)
    fourier_k: int = 4
    steps: int = 3000
    batch: int = 128
    lr: float = 1e-3
    sigma_translation: float = 0.01
    sigma_rotation: float = 0.15
    soft_inflation: float = 1.5
    negative_ratio: float = 1.5


@dataclass(frozen=True)
class SceneConfig(SettingsConfig):
    settings_section = 'SCENE'

    margin: float = 0.01
    softmin_temperature: float = 0.005
    softmin_neighbors: int = 16


@dataclass(frozen=True)
class OptimizerConfig(SettingsConfig):
    settings_section = 'OPTIMIZER'

    batch: int = 8
    steps: int = 80
    lr: float = 0.02
    seed: int = 0
    init_candidates: int = 512
    init: str = 'proposal'
    ik_iterations: int = 60
    density_steps: int = 6
    distance_scale: float = 0.01
    gradient: str = 'analytic'
    fd_eps: float = 1e-4
    joint_fd_eps: float = 1e-6
    workers: int = 1
    max_joint_step: float = None

    def __post_init__(self):
        if self.batch < 1 or self.steps < 1:
            raise ValueError('batch and steps must be >= 1')
        if self.gradient not in ('fd', 'analytic'):
            raise ValueError(f"gradient must be 'fd' or 'analytic', got {self.gradient!r}")
        if self.init not in ('proposal', 'constant'):
            raise ValueError(f"init must be 'proposal' or 'constant', got {self.init!r}")
        if self.distance_scale <= 0.0:
            raise ValueError('distance_scale must be positive')


def default_arm_file():
    return Path(settings.JFTO['ARM_FILE'])


def output_root():
    return Path(settings.OUTPUT_ROOT)
