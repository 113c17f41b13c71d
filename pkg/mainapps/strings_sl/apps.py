from django.apps import AppConfig


class StringsSlConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "mainapps.strings_sl"
