from django.apps import AppConfig


class DictionaryConfig(AppConfig):
    name = 'apps.dictionary'
    verbose_name = 'Dictionaries'
