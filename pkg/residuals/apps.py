from django.apps import AppConfig


class ResidualsConfig(AppConfig):
    name = "residuals"
    verbose_name = "Probability-scale residuals"
