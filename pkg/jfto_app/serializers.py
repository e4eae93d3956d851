"""DRF serializers validating every JSON document the planner reads.

``load_payload`` checks the schema version first (SchemaVersionMismatch) and
then flattens ``serializer.errors`` into a field path (ValidationFailure).
"""

from rest_framework import serializers

from .exceptions import SchemaVersionMismatch, ValidationFailure

SCENE_VERSION = 'jfto-scene/1'
TRAJECTORY_VERSION = 'jfto-trajectory/1'
MLP_VERSION = 'jfto-mlp/1'
FLOW_VERSION = 'jfto-flow/1'
GRASP_VERSION = 'jfto-grasp/1'


def load_payload(serializer_class, payload, prefix=''):
    """Validate ``payload`` and return ``validated_data``."""
    if not isinstance(payload, dict):
        raise ValidationFailure('expected a JSON object', field_path=prefix)
    expected = getattr(serializer_class, 'schema_version', None)
    if expected is not None and payload.get('version') != expected:
        raise SchemaVersionMismatch(
            f'unsupported version {payload.get("version")!r}, expected {expected!r}',
            found=payload.get('version'),
            expected=expected,
        )
    serializer = serializer_class(data=payload)
    if not serializer.is_valid():
        raise ValidationFailure.from_serializer_errors(serializer.errors, prefix)
    return serializer.validated_data


class Pose7Field(serializers.ListField):
    """``[tx, ty, tz, qw, qx, qy, qz]``"""

    child = serializers.FloatField()

    def __init__(self, **kwargs):
        kwargs.setdefault('min_length', 7)
        kwargs.setdefault('max_length', 7)
        super().__init__(**kwargs)

    def to_internal_value(self, data):
        values = super().to_internal_value(data)
        if not any(values[3:]):
            raise serializers.ValidationError('quaternion must be non-zero')
        return values


class FlatPointsField(serializers.ListField):
    """Points as a flat ``[x0, y0, z0, x1, ...]`` array."""

    child = serializers.FloatField()

    def to_internal_value(self, data):
        values = super().to_internal_value(data)
        if len(values) % 3:
            raise serializers.ValidationError('length must be a multiple of 3')
        return values


class VectorField(serializers.ListField):
    child = serializers.FloatField()

    def __init__(self, length, **kwargs):
        super().__init__(min_length=length, max_length=length, **kwargs)


# Checkpoints

class MlpCheckpointSerializer(serializers.Serializer):
    schema_version = MLP_VERSION

    version = serializers.CharField()
    widths = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=2)
    activation = serializers.ChoiceField(choices=['tanh', 'identity'], default='tanh')
    weights = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))
    biases = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))

    def validate(self, data):
        layers = len(data['widths']) - 1
        if len(data['weights']) != layers:
            raise serializers.ValidationError({'weights': f'expected {layers} weight matrices'})
        if len(data['biases']) != layers:
            raise serializers.ValidationError({'biases': f'expected {layers} bias vectors'})
        return data


class FlowCheckpointSerializer(serializers.Serializer):
    schema_version = FLOW_VERSION

    version = serializers.CharField()
    net = serializers.DictField()
    horizon = serializers.IntegerField(min_value=0)
    centers = serializers.ListField(child=VectorField(4))
    mean = serializers.ListField(child=VectorField(6))
    scale = serializers.ListField(child=serializers.FloatField(min_value=1e-12), min_length=6, max_length=6)
    ode_steps = serializers.IntegerField(min_value=1, default=40)
    final_loss = serializers.FloatField(allow_null=True, required=False)


class GraspCheckpointSerializer(serializers.Serializer):
    schema_version = GRASP_VERSION

    version = serializers.CharField()
    classifier = serializers.DictField()
    fourier_k = serializers.IntegerField(min_value=1)
    bounds_lower = VectorField(6)
    bounds_upper = VectorField(6)
    human_grasps = serializers.ListField(child=Pose7Field(), default=list)
    similarity_weight = serializers.FloatField(min_value=0.0)
    w_trans = serializers.FloatField(min_value=0.0, max_value=1.0)
    train_auc = serializers.FloatField(allow_null=True, required=False)

    def validate(self, data):
        if any(lo >= hi for lo, hi in zip(data['bounds_lower'], data['bounds_upper'])):
            raise serializers.ValidationError({'bounds_upper': 'every upper bound must exceed its lower bound'})
        return data


# Arm description

class JointSerializer(serializers.Serializer):
    a = serializers.FloatField()
    alpha = serializers.FloatField()
    d = serializers.FloatField()
    theta_offset = serializers.FloatField(default=0.0)
    lower = serializers.FloatField()
    upper = serializers.FloatField()

    def validate(self, data):
        if data['lower'] >= data['upper']:
            raise serializers.ValidationError({'upper': 'upper limit must exceed lower limit'})
        return data


class BodyPointSerializer(serializers.Serializer):
    link = serializers.IntegerField(min_value=0)
    position = VectorField(3)
    radius = serializers.FloatField(min_value=1e-6)


class ArmConfigSerializer(serializers.Serializer):
    name = serializers.CharField()
    joints = JointSerializer(many=True, allow_empty=False)
    body_points = BodyPointSerializer(many=True)
    tool = Pose7Field(default=[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])

    def validate(self, data):
        dof = len(data['joints'])
        for index, point in enumerate(data['body_points']):
            if point['link'] > dof:
                raise serializers.ValidationError({'body_points': {index: {'link': f'link must be <= {dof}'}}})
        return data


# Scene and trajectory files

class ObjectCloudSerializer(serializers.Serializer):
    points = FlatPointsField()
    normals = FlatPointsField()

    def validate(self, data):
        if len(data['points']) != len(data['normals']):
            raise serializers.ValidationError({'normals': 'one normal per point'})
        return data


class SceneBundleSerializer(serializers.Serializer):
    schema_version = SCENE_VERSION

    version = serializers.CharField()
    task = serializers.CharField(default='scene')
    units = serializers.ChoiceField(choices=['m/rad'], default='m/rad')
    metadata = serializers.DictField(default=dict)
    demos = serializers.ListField(child=serializers.ListField(child=Pose7Field(), min_length=1), min_length=1)
    human_grasps = serializers.ListField(child=Pose7Field(), required=False)
    background_cloud = FlatPointsField(default=list)
    object_cloud = ObjectCloudSerializer()
    x0 = Pose7Field()

    def validate_demos(self, demos):
        lengths = sorted({len(traj) for traj in demos})
        if len(lengths) > 1:
            raise serializers.ValidationError(f'all demos must share one horizon, found lengths {lengths}')
        return demos


class TrajectoryFileSerializer(serializers.Serializer):
    schema_version = TRAJECTORY_VERSION

    version = serializers.CharField()
    object_traj = serializers.ListField(child=Pose7Field(), min_length=1)
    joint_traj = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()), default=list)
    grasp = Pose7Field(required=False)
    score = serializers.DictField(required=False)


# Run configuration (``--config``)

class RunConfigSerializer(serializers.Serializer):
    seed = serializers.IntegerField(min_value=0, required=False)
    method = serializers.ChoiceField(choices=['joint', 'sequential', 'distance'], required=False)
    alpha = serializers.FloatField(min_value=0.0, required=False)
    beta = serializers.FloatField(min_value=0.0, required=False)
    gamma = serializers.FloatField(min_value=0.0, required=False)
    batch = serializers.IntegerField(min_value=1, required=False)
    steps = serializers.IntegerField(min_value=1, required=False)
    lr = serializers.FloatField(min_value=0.0, required=False)
    workers = serializers.IntegerField(min_value=1, required=False)
    gradient = serializers.ChoiceField(choices=['fd', 'analytic'], required=False)
    density_steps = serializers.IntegerField(min_value=1, required=False)
    init_candidates = serializers.IntegerField(min_value=1, required=False)
    init = serializers.ChoiceField(choices=['proposal', 'constant'], required=False)
    distance_scale = serializers.FloatField(min_value=1e-6, required=False)
    max_joint_step = serializers.FloatField(min_value=0.0, allow_null=True, required=False)
    w_trans = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    similarity_weight = serializers.FloatField(min_value=0.0, required=False)
    fourier_k = serializers.IntegerField(min_value=1, required=False)
    horizon = serializers.IntegerField(min_value=1, required=False)
    noise = serializers.FloatField(min_value=0.0, required=False)
    gap = serializers.FloatField(min_value=0.0, required=False)
    n = serializers.IntegerField(min_value=1, required=False)
    task = serializers.CharField(required=False)
    scene = serializers.CharField(required=False)
    arm = serializers.CharField(required=False)
    flow = serializers.CharField(required=False)
    grasp = serializers.CharField(required=False)
    count = serializers.IntegerField(min_value=1, required=False)
    holdout = serializers.FloatField(min_value=0.0, max_value=0.9, required=False)
    ode_steps = serializers.IntegerField(min_value=1, required=False)
    demo_index = serializers.IntegerField(min_value=0, required=False)
    seeds = serializers.IntegerField(min_value=1, required=False)
    first_seed = serializers.IntegerField(min_value=0, required=False)
    flow_steps = serializers.IntegerField(min_value=1, required=False)
    grasp_steps = serializers.IntegerField(min_value=1, required=False)
    grasp_count = serializers.IntegerField(min_value=1, required=False)
    margin = serializers.FloatField(min_value=0.0, required=False)
    background = serializers.CharField(required=False)
