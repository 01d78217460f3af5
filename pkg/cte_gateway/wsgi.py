"""WSGI config for the CT-e authority simulator and gateway project."""

import os
from django.core.wsgi import get_wsgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "cte_gateway.settings")

application = get_wsgi_application()
