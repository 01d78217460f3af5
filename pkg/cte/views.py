import logging

from django.http import HttpResponse
from django.views.decorators.csrf import csrf_exempt
from django.views.decorators.http import require_POST

from .authority.runtime import get_authority
from .wire.envelope import ServiceKind

logger = logging.getLogger(__name__)

XML_CONTENT_TYPE = "application/xml; charset=utf-8"


def service_view(kind: ServiceKind):
    @csrf_exempt
    @require_POST
    def view(request):
        # Every outcome, errors included, is a 200 carrying a result code.
        body = get_authority().handle(kind, request.body)
        return HttpResponse(body, content_type=XML_CONTENT_TYPE)

    view.__name__ = f"{kind.name.lower()}_view"
    return view


send_batch = service_view(ServiceKind.SEND_BATCH)
track_batch = service_view(ServiceKind.TRACK_BATCH)
withdraw = service_view(ServiceKind.WITHDRAW_CTE)
withdraw_numbering = service_view(ServiceKind.WITHDRAW_NUMBERING)
track_status = service_view(ServiceKind.TRACK_CTE_STATUS)
correct = service_view(ServiceKind.CORRECT_CTE)
service_status = service_view(ServiceKind.TRACK_SERVICE_STATUS)
