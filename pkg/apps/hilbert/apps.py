from django.apps import AppConfig


class HilbertConfig(AppConfig):
    name = 'apps.hilbert'
    verbose_name = 'Inner-product space kernel'
