from rest_framework import serializers

from .models import RunManifest


class RunManifestSerializer(serializers.ModelSerializer):
    class Meta:
        model = RunManifest
        fields = [
            'id', 'subcommand', 'status', 'config_path', 'seed', 'output_dir',
            'config', 'inputs', 'timings', 'scores', 'error',
            'created_at', 'updated_at', 'finished_at',
        ]
        read_only_fields = ['id', 'created_at', 'updated_at']
