from django.apps import AppConfig


class HamiltoniansConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "mainapps.hamiltonians"
