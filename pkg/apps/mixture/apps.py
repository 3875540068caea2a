from django.apps import AppConfig

class MixtureConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "apps.mixture"
