from django.apps import AppConfig


class GreedyAppConfig(AppConfig):
    name = 'apps.greedy'
    verbose_name = 'Greedy engines'
