from django.apps import AppConfig


class CteConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "cte"
    verbose_name = "CT-e integration gateway"
