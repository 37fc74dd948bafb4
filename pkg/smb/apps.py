from django.apps import AppConfig


class SmbConfig(AppConfig):
    name = 'smb'
    verbose_name = "smbforge"
    default_auto_field = 'django.db.models.AutoField'

    def load_signals(self):
        from smb import signals  # noqa: F401 (registers receivers)

    def ready(self):
        self.load_signals()
