from django.apps import AppConfig


class WeylSolverConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "mainapps.weyl_solver"
