from django.apps import AppConfig


class JftoRunsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'jfto_runs'
    verbose_name = 'Run manifests'
