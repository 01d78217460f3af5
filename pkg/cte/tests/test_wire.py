from unittest.mock import MagicMock, patch

import requests
from django.test import SimpleTestCase, override_settings

from cte.authority.runtime import get_authority, reset_authority
from cte.authority.service import Environment
from cte.domain.errors import EnvelopeError, TransportError
from cte.wire import codes
from cte.wire.bodies import NumberingRange, parse_withdraw_numbering, withdraw_numbering_body
from cte.wire.codes import Category, result_code
from cte.wire.envelope import (
    ServiceKind,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
)
from cte.wire.transport import HttpTransport, InProcessTransport

from .support import ISSUER, UF, certificate, make_authority


def _request(**attrs) -> bytes:
    values = {"service": "TrackServiceStatus", "version": "1.04", "uf": UF, "certRef": "abc"}
    values.update(attrs)
    rendered = " ".join(f'{name}="{value}"' for name, value in values.items() if value is not None)
    return f"<cteRequest {rendered}><serviceStatus/></cteRequest>".encode("utf-8")


class ResultCodeTests(SimpleTestCase):
    def test_known_codes(self):
        self.assertTrue(result_code(100).is_success)
        self.assertIs(result_code(282).category, Category.E1_CERTIFICATE)
        self.assertIs(result_code(225).category, Category.E2_XML)
        self.assertIs(result_code(509).category, Category.E3_CONNECTION)
        self.assertIs(result_code(204).category, Category.E4_SEMANTIC)
        self.assertEqual(str(result_code(103)), "103 Batch received")
        self.assertEqual(result_code(100, "custom").message, "custom")

    def test_unknown_codes_do_not_raise(self):
        self.assertEqual(result_code(777).code, 777)
        self.assertFalse(result_code(777).is_success)
        self.assertEqual(result_code("abc").code, codes.INTERNAL_ERROR)


class EnvelopeTests(SimpleTestCase):
    def test_request_round_trip(self):
        envelope = encode_request(ServiceKind.TRACK_SERVICE_STATUS, b"<serviceStatus/>", uf=UF, certificate_ref="abc")
        decoded = decode_request(envelope.to_bytes())
        self.assertEqual(decoded, envelope)

    def test_request_failures_carry_result_codes(self):
        cases = [
            (b"<cteRequest", codes.XML_MALFORMED),
            (b"<other/>", codes.XML_MALFORMED),
            (_request(service="Bogus"), codes.XML_MALFORMED),
            (_request(version="9.99"), codes.UNSUPPORTED_VERSION),
            (_request(version=None), codes.UNSUPPORTED_VERSION),
            (_request(uf="99"), codes.INVALID_UF),
            (_request(uf=None), codes.INVALID_UF),
        ]
        for data, code in cases:
            with self.subTest(data=data):
                with self.assertRaises(EnvelopeError) as ctx:
                    decode_request(data)
                self.assertEqual(ctx.exception.result.code, code)

    def test_encode_refuses_malformed_payload(self):
        with self.assertRaises(EnvelopeError):
            encode_request(ServiceKind.SEND_BATCH, b"<cteBatch>")

    def test_decode_response_is_total(self):
        cases = [b"", b"garbage", b"<html/>", b'<cteResponse code="1x"/>', b'<cteResponse message="m"/>']
        for data in cases:
            with self.subTest(data=data):
                self.assertEqual(decode_response(data).code.code, codes.XML_MALFORMED)

    def test_response_round_trip(self):
        data = encode_response(codes.BATCH_RECEIVED, b"<receipt number='1'/>")
        response = decode_response(data)
        self.assertEqual(response.code.code, 103)
        self.assertEqual(response.body_element().get("number"), "1")
        self.assertIsNone(decode_response(encode_response(107)).body_element())

    def test_service_paths(self):
        self.assertIs(ServiceKind.from_path("/ws/send-batch"), ServiceKind.SEND_BATCH)
        self.assertIsNone(ServiceKind.from_path("/ws/nothing"))
        self.assertTrue(ServiceKind.TRACK_BATCH.is_asynchronous)
        self.assertFalse(ServiceKind.CORRECT_CTE.is_asynchronous)


class BodiesTests(SimpleTestCase):
    def test_numbering_range(self):
        numbering = NumberingRange(ISSUER, "001", 500, 510)
        self.assertEqual(numbering.ref, f"NUM:{ISSUER}:001:500-510")
        self.assertEqual(NumberingRange.from_ref(numbering.ref), numbering)
        self.assertIn(505, numbering)
        self.assertNotIn(511, numbering)
        self.assertEqual(parse_withdraw_numbering(withdraw_numbering_body(numbering, "gap")), (numbering, "gap"))
        with self.assertRaises(ValueError):
            NumberingRange.from_ref("KEY:1:2:3-4")


class TransportTests(SimpleTestCase):
    def test_in_process_transport(self):
        transport = InProcessTransport(lambda service, request: b"<cteResponse code='107'/>")
        self.assertEqual(transport.send(ServiceKind.TRACK_SERVICE_STATUS, b"x"), b"<cteResponse code='107'/>")
        transport.down = True
        with self.assertRaises(TransportError):
            transport.send(ServiceKind.TRACK_SERVICE_STATUS, b"x")
        self.assertEqual(transport.calls, 2)

    def test_http_transport_posts_xml(self):
        session = MagicMock()
        session.post.return_value = MagicMock(status_code=200, content=b"<cteResponse code='107'/>")
        transport = HttpTransport("http://authority:8000/", timeout=5, session=session)
        self.assertEqual(transport.url_for(ServiceKind.WITHDRAW_CTE), "http://authority:8000/ws/withdraw")
        self.assertEqual(transport.send(ServiceKind.TRACK_SERVICE_STATUS, b"<x/>"), b"<cteResponse code='107'/>")
        args, kwargs = session.post.call_args
        self.assertEqual(args[0], "http://authority:8000/ws/service-status")
        self.assertEqual(kwargs["data"], b"<x/>")
        self.assertEqual(kwargs["timeout"], 5)

    def test_http_failures_become_transport_errors(self):
        session = MagicMock()
        session.post.side_effect = requests.ConnectionError("refused")
        with self.assertRaises(TransportError):
            HttpTransport("http://authority", session=session).send(ServiceKind.SEND_BATCH, b"<x/>")

        session = MagicMock()
        session.post.return_value = MagicMock(status_code=502, content=b"")
        with self.assertRaises(TransportError):
            HttpTransport("http://authority", session=session).send(ServiceKind.SEND_BATCH, b"<x/>")


class ServiceViewTests(SimpleTestCase):
    def setUp(self):
        self.authority = make_authority(certificate())
        patcher = patch("cte.views.get_authority", return_value=self.authority)
        patcher.start()
        self.addCleanup(patcher.stop)

    def test_service_status_over_http(self):
        response = self.client.post("/ws/service-status", data=_request(), content_type="application/xml")
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response["Content-Type"], "application/xml; charset=utf-8")
        self.assertEqual(decode_response(response.content).code.code, codes.SERVICE_IN_OPERATION)

    def test_errors_are_200_with_a_code(self):
        response = self.client.post("/ws/send-batch", data=b"not xml", content_type="application/xml")
        self.assertEqual(response.status_code, 200)
        self.assertEqual(decode_response(response.content).code.code, codes.XML_MALFORMED)

    def test_request_sent_to_the_wrong_endpoint(self):
        response = self.client.post("/ws/withdraw", data=_request(), content_type="application/xml")
        self.assertEqual(decode_response(response.content).code.code, codes.XML_MALFORMED)

    def test_only_post_is_allowed(self):
        self.assertEqual(self.client.get("/ws/service-status").status_code, 405)


@override_settings(CTE_AUTHORITY_WORKER=False, CTE_ENVIRONMENT="production", CTE_AUTHORITY_DELAY_MS=1500)
class AuthorityRuntimeTests(SimpleTestCase):
    def setUp(self):
        reset_authority()
        self.addCleanup(reset_authority)

    def test_one_authority_per_process(self):
        authority = get_authority()
        self.assertIs(get_authority(), authority)
        self.assertIs(authority.environment, Environment.PRODUCTION)
        self.assertEqual(authority.delay.total_seconds(), 1.5)
        reset_authority()
        self.assertIsNot(get_authority(), authority)
