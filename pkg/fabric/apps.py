from django.apps import AppConfig


class FabricConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "fabric"
