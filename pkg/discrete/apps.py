from django.apps import AppConfig


class DiscreteConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "discrete"
