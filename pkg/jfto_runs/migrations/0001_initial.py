# Generated by Django 5.1.6 on 2026-10-16 09:12

import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='RunManifest',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, primary_key=True, serialize=False)),
                ('subcommand', models.CharField(max_length=50)),
                ('status', models.CharField(choices=[('running', 'Running'), ('succeeded', 'Succeeded'), ('failed', 'Failed')], default='running', max_length=20)),
                ('config_path', models.CharField(blank=True, default='', max_length=500)),
                ('seed', models.IntegerField(blank=True, null=True)),
                ('output_dir', models.CharField(max_length=500)),
                ('config', models.JSONField(default=dict)),
                ('inputs', models.JSONField(default=dict)),
                ('timings', models.JSONField(default=dict)),
                ('scores', models.JSONField(default=dict)),
                ('error', models.JSONField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['created_at'],
            },
        ),
    ]
