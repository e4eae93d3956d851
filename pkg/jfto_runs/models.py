import uuid

from django.db import models


class RunManifest(models.Model):
    STATUS_RUNNING = 'running'
    STATUS_SUCCEEDED = 'succeeded'
    STATUS_FAILED = 'failed'
    STATUS_CHOICES = [
        (STATUS_RUNNING, 'Running'),
        (STATUS_SUCCEEDED, 'Succeeded'),
        (STATUS_FAILED, 'Failed'),
    ]

    id = models.UUIDField(primary_key=True, default=uuid.uuid4)
    subcommand = models.CharField(max_length=50)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default=STATUS_RUNNING)
    config_path = models.CharField(max_length=500, blank=True, default='')
    seed = models.IntegerField(null=True, blank=True)
    output_dir = models.CharField(max_length=500)
    config = models.JSONField(default=dict)  # resolved: flags > --config file > settings
    inputs = models.JSONField(default=dict)
    timings = models.JSONField(default=dict)
    scores = models.JSONField(default=dict)
    error = models.JSONField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['created_at']

    def __str__(self):
        return f'{self.subcommand} {self.id} ({self.status})'
