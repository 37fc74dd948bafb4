import os

import celery
import sentry_sdk
from sentry_sdk.integrations.celery import CeleryIntegration


os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'smb.settings')
SENTRY_DSN = os.getenv('SENTRY_DSN')


class Celery(celery.Celery):
    def on_configure(self):
        if not SENTRY_DSN:
            return

        # Hook into the Celery error handler (workers don't load Django's init)
        sentry_sdk.init(SENTRY_DSN, integrations=[CeleryIntegration()])


app = Celery('smb')

app.config_from_object('django.conf:settings', namespace='CELERY')

app.autodiscover_tasks()
