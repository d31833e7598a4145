import os

from celery import Celery

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "lambda_fabric.settings")

app = Celery("lambda_fabric")
app.config_from_object("django.conf:settings", namespace="CELERY")
app.conf.task_default_queue = "fabric-bench"
app.autodiscover_tasks(["fabric"])
