from django.apps import AppConfig


class JftoAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'jfto_app'
    verbose_name = 'Joint flow trajectory optimization'
