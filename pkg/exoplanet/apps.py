from django.apps import AppConfig


class ExoplanetConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "exoplanet"
