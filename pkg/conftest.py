"""Configure Django before pytest collects the residuals test modules."""
import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "psr_toolkit.settings")
django.setup()
