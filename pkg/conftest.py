import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "lambda_fabric.settings")
django.setup()
