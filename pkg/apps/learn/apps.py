from django.apps import AppConfig


class LearnAppConfig(AppConfig):
    name = 'apps.learn'
    verbose_name = 'Greedy regression estimator'
