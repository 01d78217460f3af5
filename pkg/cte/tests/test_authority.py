import random
import threading
from dataclasses import replace
from datetime import timedelta
from fractions import Fraction
from math import floor

from django.test import SimpleTestCase

from cte.authority.metrics import WINDOW, ResponseTimeWindow, avg_response_time
from cte.authority.service import RETENTION, Authority, CertificateRegistry, Environment, ProductionRegistry
from cte.clock import VirtualClock
from cte.domain.document import canonical_serialize
from cte.services.batcher import MAX_BATCH_BYTES, wrap_batch
from cte.wire import codes
from cte.wire.bodies import NumberingRange
from cte.wire.envelope import ServiceKind, decode_response, encode_request

from .support import ISSUER, NOW, OTHER_ISSUER, REASON, UF, certificate, draft, make_authority, make_client, signed


def batch_bytes(docs, batch_id=1):
    return wrap_batch(batch_id, docs[0].establishment, [canonical_serialize(doc) for doc in docs])


class AuthorityTestCase(SimpleTestCase):
    def setUp(self):
        self.clock = VirtualClock(NOW)
        self.cert = certificate()
        self.authority = make_authority(self.cert, clock=self.clock)
        self.client, self.transport = make_client(self.authority, self.cert)

    def submit(self, numbers, batch_id=1, **kwargs):
        docs = [signed(draft(n, **kwargs), self.cert) for n in numbers]
        return self.client.send_batch(batch_bytes(docs, batch_id))

    def approve(self, numbers, batch_id=1):
        code, receipt = self.submit(numbers, batch_id)
        self.assertEqual(code.code, codes.BATCH_RECEIVED)
        self.authority.pump(self.clock.now())
        return receipt


class BatchServiceTests(AuthorityTestCase):
    def test_receipt_then_processed_result(self):
        code, receipt = self.submit([1, 2, 3])
        self.assertEqual(code.code, codes.BATCH_RECEIVED)
        self.assertEqual(receipt.receiving_place, UF)
        self.assertTrue(receipt.no_samples)
        self.assertEqual(len(receipt.number), 15)

        code, status = self.client.track_batch(receipt.number)
        self.assertEqual(code.code, codes.BATCH_IN_PROCESSING)
        self.assertFalse(status.processed)

        self.authority.pump(NOW)
        code, status = self.client.track_batch(receipt.number)
        self.assertEqual(code.code, codes.BATCH_PROCESSED)
        self.assertEqual([item.code.code for item in status.entry.per_document], [100, 100, 100])
        self.assertEqual([item.access_key for item in status.entry.per_document], [draft(n).key for n in (1, 2, 3)])
        self.assertEqual(self.authority.approved_keys, {draft(n).key for n in (1, 2, 3)})

    def test_processing_waits_for_the_delay(self):
        self.authority.delay = timedelta(seconds=30)
        self.submit([1])
        self.assertEqual(self.authority.pump(NOW + timedelta(seconds=29)), [])
        self.assertEqual(len(self.authority.pump(NOW + timedelta(seconds=30))), 1)

    def test_duplicates_are_rejected_with_204(self):
        self.approve([1])
        self.submit([1], batch_id=2)
        self.submit([1], batch_id=3, seed="87654321")
        entries = self.authority.pump(NOW)
        self.assertEqual([e.per_document[0].code.code for e in entries], [204, 204])
        self.assertEqual(len(self.authority.issued), 1)

    def test_resubmitting_the_same_bytes_returns_the_original_receipt(self):
        data = batch_bytes([signed(draft(1), self.cert)])
        _, first = self.client.send_batch(data)
        self.authority.pump(NOW)
        _, again = self.client.send_batch(data)
        self.assertEqual(first, again)
        self.assertEqual(self.authority.received_count, 1)

    def test_synchronous_refusals(self):
        small = canonical_serialize(signed(draft(1), self.cert))
        cases = {
            codes.BATCH_TOO_LARGE: batch_bytes([signed(draft(1, cargo="x" * MAX_BATCH_BYTES), self.cert)]),
            codes.BATCH_TOO_MANY_DOCUMENTS: wrap_batch(1, ISSUER, [small] * 51),
            codes.MIXED_ESTABLISHMENTS: wrap_batch(
                1, ISSUER, [small, canonical_serialize(draft(2, issuer=OTHER_ISSUER))]
            ),
            codes.CERTIFICATE_CNPJ_MISMATCH: batch_bytes([draft(2, issuer=OTHER_ISSUER)]),
            codes.XML_MALFORMED: wrap_batch(1, ISSUER, [small]).replace(b'count="1"', b'count="3"'),
        }
        for expected, data in cases.items():
            with self.subTest(code=expected):
                code, receipt = self.client.send_batch(data)
                self.assertEqual(code.code, expected)
                self.assertIsNone(receipt)
        self.assertEqual(self.authority.queue_depth, 0)

    def test_certificate_refusals(self):
        expired = certificate(name="expired", not_after=NOW - timedelta(days=1))
        revoked = certificate(name="revoked", revoked=True)
        self.authority.certificates.register(expired)
        self.authority.certificates.register(revoked)
        cases = [
            (certificate(name="unknown"), codes.INVALID_CERTIFICATE),
            (expired, codes.OVERDUE_CERTIFICATE),
            (revoked, codes.REVOKED_CERTIFICATE),
        ]
        data = batch_bytes([signed(draft(1), self.cert)])
        for cert, expected in cases:
            with self.subTest(code=expected):
                client, _ = make_client(self.authority, cert)
                code, _ = client.send_batch(data)
                self.assertEqual(code.code, expected)
                self.assertEqual(client.withdraw(draft(1).key, REASON).code, expected)

    def test_per_document_rejections(self):
        good = signed(draft(1), self.cert)
        tampered = replace(signed(draft(2), self.cert), cargo_description="Something else")
        wrong_digit = draft(3)
        bad_key = replace(
            wrong_digit.access_key, check_digit=str((int(wrong_digit.access_key.check_digit) + 1) % 10)
        )
        bad = signed(replace(wrong_digit, access_key=bad_key), self.cert)
        self.client.send_batch(batch_bytes([good, tampered, bad]))
        (entry,) = self.authority.pump(NOW)
        self.assertEqual(
            [item.code.code for item in entry.per_document],
            [codes.DOCUMENT_APPROVED, codes.INVALID_SIGNATURE, codes.INVALID_ACCESS_KEY],
        )
        self.assertEqual(self.authority.rejected_keys, {tampered.key, bad.key})

    def test_invalid_establishment_cnpj_is_rejected_per_document(self):
        invalid = ISSUER[:12] + str((int(ISSUER[12:]) + 1) % 100).zfill(2)
        doc = draft(1, issuer=invalid)
        code, _ = self.client.send_batch(batch_bytes([doc]))
        self.assertEqual(code.code, codes.BATCH_RECEIVED)
        (entry,) = self.authority.pump(NOW)
        self.assertEqual(entry.per_document[0].code.code, codes.CERTIFICATE_CNPJ_MISMATCH)

    def test_paused_authority_answers_108(self):
        self.authority.pause()
        code, receipt = self.submit([1])
        self.assertEqual(code.code, codes.SERVICE_PARALYSED)
        self.assertIsNone(receipt)
        code, status = self.client.service_status()
        self.assertEqual(code.code, codes.SERVICE_PARALYSED)
        self.authority.resume()
        self.assertEqual(self.submit([1])[0].code, codes.BATCH_RECEIVED)


class ProductionGateTests(SimpleTestCase):
    def test_cnpj_enabled_after_a_clean_approval_batch(self):
        cert = certificate()
        registry = ProductionRegistry()
        approval = make_authority(cert, environment=Environment.APPROVAL, production=registry)
        production = make_authority(cert, environment=Environment.PRODUCTION, production=registry)
        approval_client, _ = make_client(approval, cert)
        production_client, _ = make_client(production, cert)

        code, _ = production_client.send_batch(batch_bytes([signed(draft(1), cert)]))
        self.assertEqual(code.code, codes.CERTIFICATE_PREREQUISITES)

        approval_client.send_batch(batch_bytes([signed(draft(1), cert)]))
        approval.pump(NOW)
        self.assertTrue(registry.is_enabled(ISSUER))

        code, _ = production_client.send_batch(batch_bytes([signed(draft(1), cert)]))
        self.assertEqual(code.code, codes.BATCH_RECEIVED)

    def test_batch_with_a_rejection_does_not_enable(self):
        cert = certificate()
        approval = make_authority(cert)
        client, _ = make_client(approval, cert)
        tampered = replace(signed(draft(2), cert), cargo_description="Changed")
        client.send_batch(batch_bytes([signed(draft(1), cert), tampered]))
        approval.pump(NOW)
        self.assertFalse(approval.production.is_enabled(ISSUER))


class RetentionTests(AuthorityTestCase):
    def test_results_kept_for_twenty_four_hours(self):
        receipt = self.approve([1])
        self.authority.purge_output(NOW + timedelta(hours=23, minutes=59))
        code, _ = self.client.track_batch(receipt.number)
        self.assertEqual(code.code, codes.BATCH_PROCESSED)

        self.assertEqual(self.authority.purge_output(NOW + timedelta(hours=24, minutes=1)), 1)
        code, status = self.client.track_batch(receipt.number)
        self.assertEqual(code.code, codes.NOT_FOUND)
        self.assertIsNone(status)

    def test_random_purge_schedules(self):
        rng = random.Random(7)
        for case in range(50):
            authority = make_authority(self.cert)
            client, _ = make_client(authority, self.cert)
            completed = {}
            moment = NOW
            for number in range(1, 21):
                moment += timedelta(minutes=rng.randrange(1, 180))
                client.send_batch(batch_bytes([signed(draft(number), self.cert)], batch_id=number))
                for entry in authority.pump(moment):
                    completed[entry.receipt] = entry.completed_at
                if rng.random() < 0.3:
                    authority.purge_output(moment)
                    with self.subTest(case=case, number=number):
                        for receipt, done in completed.items():
                            kept = receipt in authority.output_queue
                            self.assertEqual(kept, moment - done < RETENTION)


class SynchronousServiceTests(AuthorityTestCase):
    def test_withdraw(self):
        self.approve([1])
        key = draft(1).key
        self.assertEqual(self.client.track_cte_status(key).code, codes.DOCUMENT_APPROVED)
        self.assertEqual(self.client.withdraw(key, "too short").code, codes.XML_MALFORMED)
        self.assertEqual(self.client.withdraw(key, REASON).code, codes.CANCELLATION_APPROVED)
        self.assertEqual(self.client.withdraw(key, REASON).code, codes.ILLEGAL_STATE)
        self.assertEqual(self.client.track_cte_status(key).code, codes.CANCELLATION_APPROVED)
        self.assertEqual(self.client.withdraw(draft(9).key, REASON).code, codes.NOT_FOUND)
        self.assertEqual(self.client.track_cte_status(draft(9).key).code, codes.NOT_FOUND)

    def test_withdraw_of_a_rejected_document(self):
        tampered = replace(signed(draft(2), self.cert), cargo_description="Changed")
        self.client.send_batch(batch_bytes([tampered]))
        self.authority.pump(NOW)
        self.assertEqual(self.client.withdraw(tampered.key, REASON).code, codes.ILLEGAL_STATE)

    def test_withdraw_numbering(self):
        self.approve([5])
        used = NumberingRange(ISSUER, "001", 1, 10)
        free = NumberingRange(ISSUER, "001", 11, 20)
        self.assertEqual(self.client.withdraw_numbering(used, REASON).code, codes.ILLEGAL_STATE)
        self.assertEqual(self.client.withdraw_numbering(free, REASON).code, codes.NUMBERING_CANCELLATION_APPROVED)
        self.assertEqual(self.client.withdraw_numbering(free, REASON).code, codes.NUMBERING_CANCELLATION_APPROVED)
        self.assertEqual(self.client.track_cte_status(draft(15).key).code, codes.NUMBERING_CANCELLATION_APPROVED)
        self.assertEqual(
            self.client.withdraw_numbering(NumberingRange(ISSUER, "001", 30, 25), REASON).code, codes.XML_MALFORMED
        )
        self.assertEqual(
            self.client.withdraw_numbering(NumberingRange(OTHER_ISSUER, "001", 30, 35), REASON).code,
            codes.CERTIFICATE_CNPJ_MISMATCH,
        )

        self.submit([15], batch_id=2)
        (entry,) = self.authority.pump(NOW)
        self.assertEqual(entry.per_document[0].code.code, codes.DUPLICATE_ACCESS_KEY)

    def test_correction(self):
        self.approve([1, 2])
        key = draft(1).key
        self.assertEqual(self.client.correct(key, "Cargo weight is 12 t").code, codes.CORRECTION_REGISTERED)
        self.assertEqual(self.authority.issued[key].correction_notes, ["Cargo weight is 12 t"])
        self.assertEqual(self.client.correct(key, "   ").code, codes.XML_MALFORMED)
        self.client.withdraw(draft(2).key, REASON)
        self.assertEqual(self.client.correct(draft(2).key, "Too late").code, codes.ILLEGAL_STATE)
        self.assertEqual(self.client.correct(draft(7).key, "Unknown").code, codes.NOT_FOUND)

    def test_service_status(self):
        code, status = self.client.service_status()
        self.assertEqual(code.code, codes.SERVICE_IN_OPERATION)
        self.assertTrue(status.no_samples)
        self.assertEqual(status.queue_depth, 0)

        self.authority.delay = timedelta(seconds=2)
        self.submit([1])
        self.assertEqual(self.client.service_status()[1].queue_depth, 1)
        self.authority.pump(NOW + timedelta(seconds=2))
        self.clock.advance(timedelta(seconds=2))
        _, status = self.client.service_status()
        self.assertFalse(status.no_samples)
        self.assertEqual(status.avg_response_time_ms, 2000)
        self.assertEqual(status.queue_depth, 0)


class HandleTests(AuthorityTestCase):
    def respond(self, service, data):
        return decode_response(self.authority.handle(service, data)).code.code

    def envelope(self, service=ServiceKind.TRACK_SERVICE_STATUS, **kwargs):
        values = {"version": "1.04", "uf": UF, "certificate_ref": self.cert.key_ref}
        values.update(kwargs)
        return encode_request(service, b"<serviceStatus/>", **values).to_bytes()

    def test_garbage_and_envelope_errors(self):
        self.assertEqual(self.respond(None, b"\x00\xffgarbage"), codes.XML_MALFORMED)
        self.assertEqual(self.respond(None, b""), codes.XML_MALFORMED)
        self.assertEqual(self.respond(None, b"<other/>"), codes.XML_MALFORMED)
        self.assertEqual(self.respond(None, self.envelope(version="0.9")), codes.UNSUPPORTED_VERSION)
        self.assertEqual(self.respond(None, self.envelope(uf="99")), codes.INVALID_UF)
        self.assertEqual(self.respond(None, self.envelope(uf="")), codes.INVALID_UF)
        self.assertEqual(self.respond(ServiceKind.SEND_BATCH, self.envelope()), codes.XML_MALFORMED)
        self.assertEqual(self.respond(None, self.envelope()), codes.SERVICE_IN_OPERATION)

    def test_body_of_the_wrong_shape(self):
        data = encode_request(
            ServiceKind.WITHDRAW_CTE, b"<trackStatus/>", uf=UF, certificate_ref=self.cert.key_ref
        ).to_bytes()
        self.assertEqual(self.respond(ServiceKind.WITHDRAW_CTE, data), codes.XML_MALFORMED)

    def test_unexpected_failure_becomes_999(self):
        self.authority.service_status = None
        self.assertEqual(self.respond(None, self.envelope()), codes.INTERNAL_ERROR)


class FifoTests(SimpleTestCase):
    def test_concurrent_senders_are_processed_in_receipt_order(self):
        cert = certificate()
        payloads = [
            [batch_bytes([signed(draft(t * 100 + i + 1), cert)], batch_id=t * 100 + i + 1) for i in range(25)]
            for t in range(4)
        ]
        for repetition in range(50):
            authority = make_authority(cert)
            received: dict[int, list[str]] = {}

            def sender(index):
                client, _ = make_client(authority, cert)
                received[index] = [client.send_batch(data)[1].number for data in payloads[index]]

            threads = [threading.Thread(target=sender, args=(index,)) for index in range(4)]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join()

            with self.subTest(repetition=repetition):
                authority.pump(NOW)
                self.assertEqual(authority.processed_count, 100)
                self.assertEqual(authority.completed, sorted(authority.completed, key=int))
                for numbers in received.values():
                    self.assertEqual(numbers, sorted(numbers, key=int))
                    positions = [authority.completed.index(number) for number in numbers]
                    self.assertEqual(positions, sorted(positions))
                self.assertEqual(len(authority.approved_keys), 100)


def oracle_average(samples, now):
    start = now - WINDOW
    durations = [done - received for received, done in samples if start < done <= now]
    if not durations:
        return None
    micros = [Fraction(d.days * 86_400 * 10**6 + d.seconds * 10**6 + d.microseconds) for d in durations]
    mean_ms = sum(micros) / len(micros) / 1000
    return floor(mean_ms + Fraction(1, 2))


class ResponseTimeTests(SimpleTestCase):
    def test_window_boundaries(self):
        samples = [
            (NOW - timedelta(seconds=310), NOW - WINDOW),
            (NOW - timedelta(seconds=3), NOW),
        ]
        self.assertEqual(avg_response_time(samples, NOW), 3000)
        self.assertIsNone(avg_response_time(samples[:1], NOW))
        self.assertIsNone(avg_response_time([], NOW))

    def test_half_milliseconds_round_up(self):
        samples = [(NOW - timedelta(microseconds=1500), NOW)]
        self.assertEqual(avg_response_time(samples, NOW), 2)
        samples = [(NOW - timedelta(microseconds=1499), NOW)]
        self.assertEqual(avg_response_time(samples, NOW), 1)

    def test_matches_exact_arithmetic_on_random_traces(self):
        rng = random.Random(300)
        for trace in range(1000):
            samples = []
            done = NOW
            for _ in range(rng.randrange(0, 40)):
                done += timedelta(microseconds=rng.randrange(0, 90_000_000))
                received = done - timedelta(microseconds=rng.randrange(0, 600_000_000))
                samples.append((received, done))
            now = done + timedelta(microseconds=rng.randrange(0, 400_000_000))
            window = ResponseTimeWindow()
            for received, completed in samples:
                window.record(received, completed)
            window.prune(now)
            with self.subTest(trace=trace):
                expected = oracle_average(samples, now)
                self.assertEqual(avg_response_time(samples, now), expected)
                self.assertEqual(window.average(now), expected)


class RegistryTests(SimpleTestCase):
    def test_lookup_is_case_insensitive(self):
        cert = certificate()
        registry = CertificateRegistry([cert])
        self.assertIs(registry.get(cert.key_ref.upper()), cert)
        self.assertIsNone(registry.get(""))
        self.assertEqual(len(registry), 1)

    def test_authority_rejects_unknown_uf(self):
        with self.assertRaises(ValueError):
            Authority(uf="99")
