import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "evidence_lab.settings")
django.setup()
