"""ASGI config for the CT-e authority simulator and gateway project."""

import os
from django.core.asgi import get_asgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "cte_gateway.settings")

application = get_asgi_application()
