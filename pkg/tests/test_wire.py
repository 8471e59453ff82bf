import asyncio
import dataclasses
import json
import logging
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iuguard import canonical
from iuguard.app import launch
from iuguard.client import IUClient
from iuguard.config import load_config
from iuguard.presentation import AccessRequest, OutOfAuthorizationError, derive_presentation
from iuguard.wire.envelope import (
    ERROR_STATUS,
    MAX_BODY_BYTES,
    Envelope,
    EnvelopeError,
    ServiceError,
    raise_for_error,
)
from iuguard.wire.http import AsyncClient, Client, Endpoint, HttpServer, Router, ServiceThread, TransportError
from iuguard.wire.pki import PinMismatch, client_context, fingerprint_pem_file, server_context

from .conftest import enrollment_secret, password_of

_band_cursor = iter(range(3_560_000, 3_700_000, 1000))


def fresh_request(width=1, duration=60):
    lo = next(_band_cursor)
    return AccessRequest(lo, lo + width, 38_900_000, -77_000_000, int(time.time()), duration)


@pytest.fixture
def client(deployment, services):
    with IUClient.from_config(deployment, services.endpoints) as c:
        yield c


@pytest.fixture(scope="module")
def wire_cred(deployment, services):
    with IUClient.from_config(deployment, services.endpoints) as c:
        return c.obtain_credential("radar-01", enrollment_secret(deployment, "radar-01"))


# -- CA ----------------------------------------------------------------------


def test_issuance_round_trip(client, deployment):
    cred = client.obtain_credential("radar-02", enrollment_secret(deployment, "radar-02"))
    pk = client.issuers[cred.issuer_fp]
    assert cred.verify(pk)
    assert cred.iu_id == "radar-02"


def test_bad_enrollment_secret_is_auth_failed(client):
    with pytest.raises(ServiceError) as ei:
        client.obtain_credential("radar-01", bytes(32))
    assert ei.value.code == "AUTH_FAILED"
    assert ei.value.status == 401


def test_unregistered_iu(client):
    with pytest.raises(ServiceError) as ei:
        client.obtain_credential("radar-99", bytes(32))
    assert ei.value.code == "NOT_REGISTERED"


def test_garbage_credential_request_is_bad_request(client):
    env = Envelope("credential.request", {"request": canonical.b64e(b"\x00" * 40)})
    reply = client._clients["ca"].call("POST", "/v1/credentials", env)
    assert reply.type == "error" and reply.payload["code"] == "BAD_REQUEST"
    assert reply.id == env.id


# -- SCS ---------------------------------------------------------------------


def test_challenge_derive_access_grant(client, wire_cred):
    req = fresh_request(width=500)
    out = client.request_access(wire_cred, req)
    g = out.payload["grant"]
    assert g["granted_band"] == [req.f_low_req_khz, req.f_high_req_khz]
    assert out.payload["preemption"] == []
    assert client.get_grant(out.grant_id) == g
    assert 0 < out.presentation_bytes <= 50_000


def test_verify_mode_allocates_nothing(client, wire_cred, services):
    before = services.scs.coordinator.snapshot()
    out = client.request_access(wire_cred, fresh_request(), mode="verify")
    assert out.payload == {}
    assert services.scs.coordinator.snapshot() == before


def test_replayed_presentation_is_nonce_reused(client, wire_cred):
    req = fresh_request()
    nonce = client.challenge()
    pk = client.issuers[wire_cred.issuer_fp]
    pres = derive_presentation(wire_cred, pk, req, nonce).serialize()
    env_payload = {"mode": "authorize", "nonce": canonical.b64e(nonce), "presentation": canonical.b64e(pres), "request": req.to_payload()}
    raise_for_error(client._clients["scs"].call("POST", "/v1/access", Envelope("access.request", env_payload)))
    reply = client._clients["scs"].call("POST", "/v1/access", Envelope("access.request", env_payload))
    assert reply.payload["code"] == "NONCE_REUSED"


def test_expired_challenge(deployment):
    cfg = dataclasses.replace(deployment, scs=dataclasses.replace(deployment.scs, nonce_ttl_s=0.2, records=None))
    with launch(cfg, roles=("ca", "scs"), ephemeral_ports=True) as r, IUClient.from_config(cfg, r.endpoints) as c:
        cred = c.obtain_credential("radar-01", enrollment_secret(cfg, "radar-01"))
        req = fresh_request()
        nonce = c.challenge()
        pres = derive_presentation(cred, c.issuers[cred.issuer_fp], req, nonce).serialize()
        time.sleep(0.3)
        payload = {"nonce": canonical.b64e(nonce), "presentation": canonical.b64e(pres), "request": req.to_payload()}
        reply = c._clients["scs"].call("POST", "/v1/access", Envelope("access.request", payload))
    assert reply.payload["code"] == "NONCE_EXPIRED"
    assert ERROR_STATUS["NONCE_EXPIRED"] == 409


def test_out_of_authorization_sends_nothing(client, deployment):
    cred = client.obtain_credential("radar-02", enrollment_secret(deployment, "radar-02"))
    req = AccessRequest(cred.f_low_khz, cred.f_high_khz + 1, 0, 0, int(time.time()), 60)
    calls = []
    scs = client._clients["scs"]
    orig = scs.call
    scs.call = lambda *a, **k: calls.append(a) or orig(*a, **k)
    with pytest.raises(OutOfAuthorizationError):
        client.request_access(cred, req)
    assert calls == []


def test_out_of_range_band(client, deployment):
    # registry credentials are inside the managed range, so go through the plain path
    session = client.login("radar-01", password_of(deployment, "radar-01"))
    with pytest.raises(ServiceError) as ei:
        client.report(session, AccessRequest(3_400_000, 3_400_010, 0, 0, int(time.time()), 60))
    assert ei.value.code == "BAND_OUTSIDE_MANAGED_RANGE"
    assert ei.value.status == 422


def test_garbage_presentation_is_bad_request(client):
    payload = {"nonce": canonical.b64e(client.challenge()), "presentation": canonical.b64e(b"junk"), "request": fresh_request().to_payload()}
    reply = client._clients["scs"].call("POST", "/v1/access", Envelope("access.request", payload))
    assert reply.payload["code"] == "BAD_REQUEST"


def test_plain_access_forbidden_for_iu_certificate(client):
    env = Envelope("access.request", {"request": fresh_request().to_payload()})
    reply = client._clients["scs"].call("POST", "/v1/access", env)
    assert reply.payload["code"] == "FORBIDDEN"


def test_unknown_grant(client):
    for gid in ("00" * 16, "zz", ""):
        reply = client._clients["scs"].call("GET", f"/v1/grants/{gid}", corr="probe")
        assert reply.payload["code"] in ("GRANT_UNKNOWN", "NOT_FOUND")


def test_routing_errors(client):
    scs = client._clients["scs"]
    assert scs.call("GET", "/v1/nowhere", corr="a").payload["code"] == "NOT_FOUND"
    assert scs.call("POST", "/v1/challenge", Envelope("x")).payload["code"] == "METHOD_NOT_ALLOWED"


# -- IIC baseline --------------------------------------------------------------


def test_login_report_grant(client, deployment, services):
    session = client.login("radar-03", password_of(deployment, "radar-03"))
    req = fresh_request(width=200)
    out = client.report(session, req)
    assert out.payload["grant"]["granted_band"] == [req.f_low_req_khz, req.f_high_req_khz]
    # the SCS-side record carries only operational parameters
    rec = services.scs.coordinator.export_records()[-1]
    assert "radar" not in rec.to_line()


def test_report_verify_mode(client, deployment):
    session = client.login("radar-03", password_of(deployment, "radar-03"))
    assert client.report(session, fresh_request(), mode="verify").payload == {}


def test_wrong_password(client):
    for user, pw in (("radar-01", "nope"), ("nobody", "nope")):
        with pytest.raises(ServiceError) as ei:
            client.login(user, pw)
        assert ei.value.code == "LOGIN_FAILED"


def test_unknown_session(client):
    with pytest.raises(ServiceError) as ei:
        client.report(bytes(32), fresh_request())
    assert ei.value.code == "SESSION_EXPIRED"


def test_iic_upstream_down(deployment):
    cfg = dataclasses.replace(deployment, scs=dataclasses.replace(deployment.scs, port=1))
    with launch(cfg, roles=("iic",), ephemeral_ports=True) as r, IUClient.from_config(cfg, r.endpoints) as c:
        session = c.login("radar-01", password_of(cfg, "radar-01"))
        with pytest.raises(ServiceError) as ei:
            c.report(session, fresh_request())
    assert ei.value.code == "UPSTREAM_UNAVAILABLE"


# -- transport -----------------------------------------------------------------


@pytest.fixture(scope="module")
def echo(deployment):
    async def echo_handler(req):
        env = req.envelope()
        await asyncio.sleep(float(env.payload.get("sleep", 0)))
        return env.reply("echo", env.payload)

    async def liar(req):
        return Envelope("echo", {})  # fresh id: never matches the request

    r = Router()
    r.add("POST", "/echo", echo_handler)
    r.add("POST", "/liar", liar)
    srv = HttpServer(r, server_context(deployment.scs.identity, deployment.root_cert), name="echo")
    with ServiceThread([srv], workers=1) as t:
        yield t, Endpoint("127.0.0.1", srv.port, deployment.client.scs_pin)


def _ctx(cfg):
    return client_context(cfg.client.identity, cfg.root_cert)


def test_echo_round_trip(echo, deployment):
    _, ep = echo
    with Client(ep, _ctx(deployment)) as c:
        env = Envelope("ping", {"blob": canonical.b64e(bytes(range(256))), "n": 7, "s": "ünï"})
        reply = c.call("POST", "/echo", env)
        assert reply.id == env.id and reply.payload == env.payload
        reply2 = c.call("POST", "/echo", Envelope("ping", {"n": 8}))  # keep-alive reuse
        assert reply2.payload == {"n": 8}


def test_correlation_mismatch_is_transport_error(echo, deployment):
    _, ep = echo
    with Client(ep, _ctx(deployment)) as c, pytest.raises(TransportError, match="correlation"):
        c.call("POST", "/liar", Envelope("ping"))


def test_wrong_pin_rejected(echo, deployment):
    _, ep = echo
    bad = Endpoint(ep.host, ep.port, deployment.client.ca_pin)
    with Client(bad, _ctx(deployment)) as c, pytest.raises(TransportError) as ei:
        c.call("POST", "/echo", Envelope("ping"))
    assert isinstance(ei.value.__cause__, PinMismatch)

    async def go():
        ac = AsyncClient(bad, _ctx(deployment))
        await ac.connect()

    with pytest.raises(TransportError) as ei:
        asyncio.run(go())
    assert isinstance(ei.value.__cause__, PinMismatch)


def test_untrusted_client_certificate_rejected(echo, deployment, tmp_path):
    from iuguard.wire.pki import Identity, init_pki

    other = init_pki(tmp_path / "other")
    _, ep = echo
    ctx = client_context(other["iu-client"], deployment.root_cert)
    with Client(ep, ctx) as c, pytest.raises(TransportError):
        c.call("POST", "/echo", Envelope("ping"))
    assert isinstance(other["iu-client"], Identity)


def test_timeout_is_transport_error(echo, deployment):
    _, ep = echo
    with Client(ep, _ctx(deployment), timeout=0.2) as c, pytest.raises(TransportError, match="timeout"):
        c.call("POST", "/echo", Envelope("ping", {"sleep": "1"}))


def test_oversized_body(echo, deployment):
    _, ep = echo
    with Client(ep, _ctx(deployment)) as c:
        reply = c.call("POST", "/echo", Envelope("ping", {"pad": "x" * (MAX_BODY_BYTES + 1)}))
    assert reply.payload["code"] == "PAYLOAD_TOO_LARGE"


def test_non_canonical_body_rejected(echo, deployment):
    import http.client

    _, ep = echo
    conn = http.client.HTTPSConnection(ep.host, ep.port, context=_ctx(deployment))
    conn.request("POST", "/echo", body=b'{"v": 1, "type": "ping", "payload": {}, "id": "abc"}', headers={"x-correlation-id": "abc"})
    resp = conn.getresponse()
    body = Envelope.from_bytes(resp.read())
    conn.close()
    assert resp.status == 400 and body.payload["code"] == "MALFORMED_ENVELOPE" and body.id == "abc"


def test_5000_concurrent_calls(echo, deployment):
    _, ep = echo
    n = 5000
    ctx = _ctx(deployment)

    async def one(i, ac):
        env = Envelope("ping", {"i": i, "sleep": "0.5", "tag": canonical.b64e(i.to_bytes(4, "big") * 8)})
        reply = await ac.call("POST", "/echo", env)
        assert reply.id == env.id and reply.payload == env.payload
        return i

    async def go():
        clients = [AsyncClient(ep, ctx) for _ in range(n)]
        sem = asyncio.Semaphore(256)

        async def connect(ac):
            async with sem:
                await ac.connect()

        await asyncio.gather(*(connect(ac) for ac in clients))
        t0 = time.monotonic()
        done = await asyncio.gather(*(one(i, ac) for i, ac in enumerate(clients)))
        elapsed = time.monotonic() - t0
        await asyncio.gather(*(ac.close() for ac in clients))
        return done, elapsed

    done, elapsed = asyncio.run(go())
    assert sorted(done) == list(range(n))
    # every call sleeps 0.5 s server side: far below n * 0.5 s means they overlapped
    assert elapsed < 60


# -- envelopes -----------------------------------------------------------------

json_leaf = st.one_of(st.none(), st.booleans(), st.integers(-(2**63), 2**63), st.text(max_size=20))
json_value = st.recursive(
    json_leaf, lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=8), inner, max_size=4), max_leaves=20
)


@settings(max_examples=300, deadline=None)
@given(st.text(min_size=1, max_size=20), st.dictionaries(st.text(max_size=8), json_value, max_size=5), st.text(min_size=1, max_size=64))
def test_envelope_round_trip(type_, payload, corr):
    env = Envelope(type_, payload, corr)
    data = env.to_bytes()
    back = Envelope.from_bytes(data)
    assert back == env and back.to_bytes() == data


@pytest.mark.parametrize(
    "raw, code",
    [
        (b'{"id":"a","payload":{},"type":"t","v":1} ', "MALFORMED_ENVELOPE"),
        (b'{"payload":{},"id":"a","type":"t","v":1}', "MALFORMED_ENVELOPE"),
        (b'{"id":"a","payload":{},"type":"t","v":1,"x":0}', "MALFORMED_ENVELOPE"),
        (b'{"id":"a","payload":{},"type":"t"}', "MALFORMED_ENVELOPE"),
        (b'{"id":"\\u0061","payload":{},"type":"t","v":1}', "MALFORMED_ENVELOPE"),
        (b'{"id":"a","payload":{"k":1.50},"type":"t","v":1}', "MALFORMED_ENVELOPE"),
        (b'{"id":"","payload":{},"type":"t","v":1}', "MALFORMED_ENVELOPE"),
        (b'{"id":"a","payload":[],"type":"t","v":1}', "MALFORMED_ENVELOPE"),
        (b'[1]', "MALFORMED_ENVELOPE"),
        (b'\xff', "MALFORMED_ENVELOPE"),
        (b'{"id":"a","payload":{},"type":"t","v":2}', "UNSUPPORTED_VERSION"),
        (b'{"id":"a","payload":{},"type":"t","v":true}', "UNSUPPORTED_VERSION"),
    ],
)
def test_envelope_rejects(raw, code):
    with pytest.raises(EnvelopeError) as ei:
        Envelope.from_bytes(raw)
    assert ei.value.code == code


def test_unknown_service_code_becomes_internal():
    assert ServiceError("SOMETHING_ELSE").code == "INTERNAL"
    assert ServiceError("NONCE_REUSED").is_denial


def test_envelope_bytes_are_sorted_compact():
    env = Envelope("t", {"b": 1, "a": [1, 2]}, "id1")
    assert env.to_bytes() == b'{"id":"id1","payload":{"a":[1,2],"b":1},"type":"t","v":1}'
    assert json.loads(env.to_bytes()) == {"id": "id1", "payload": {"a": [1, 2], "b": 1}, "type": "t", "v": 1}


# -- hygiene -----------------------------------------------------------------


def test_logs_carry_no_secrets(deployment, caplog):
    caplog.set_level(logging.INFO)
    cfg = dataclasses.replace(deployment, scs=dataclasses.replace(deployment.scs, records=None))
    pw = password_of(cfg, "radar-01")
    secret = enrollment_secret(cfg, "radar-01")
    with launch(cfg, ephemeral_ports=True) as r, IUClient.from_config(cfg, r.endpoints) as c:
        cred = c.obtain_credential("radar-01", secret)
        req = fresh_request()
        nonce = c.challenge()
        pres = derive_presentation(cred, c.issuers[cred.issuer_fp], req, nonce).serialize()
        payload = {"nonce": canonical.b64e(nonce), "presentation": canonical.b64e(pres), "request": req.to_payload()}
        raise_for_error(c._clients["scs"].call("POST", "/v1/access", Envelope("access.request", payload)))
        c._clients["scs"].call("POST", "/v1/access", Envelope("access.request", payload))  # replay, logged denial
        session = c.login("radar-01", pw)
        c.report(session, fresh_request())
        with pytest.raises(ServiceError):
            c.login("radar-01", pw + "x")
    text = caplog.text
    assert "iuguard" in text  # logging was actually captured
    needles = {
        "password": pw,
        "enrollment": secret.hex(),
        "nonce": canonical.b64e(nonce),
        "nonce-hex": nonce.hex(),
        "presentation": canonical.b64e(pres)[:40],
        "credential": canonical.b64e(cred.serialize())[:40],
        "link": format(cred.link_secret, "x"),
        "session": canonical.b64e(session),
        "iu_id": "radar-01",
    }
    for name, needle in needles.items():
        assert needle not in text, name


def test_config_round_trip(deployment):
    cfg = load_config(deployment.path)
    assert cfg.scs.channel_width_khz == 10_000
    assert cfg.client.scs_pin == fingerprint_pem_file(cfg.scs.identity.cert)
    for f in ("issuer.secret", "accounts.txt", "pki/ca.key", "iu/radar-01.enroll"):
        assert (cfg.path.parent / f).stat().st_mode & 0o077 == 0, f


def test_config_missing_section(tmp_path):
    p = tmp_path / "x.ini"
    p.write_text("[ca]\nport = 1\n")
    with pytest.raises(ValueError, match=r"\[scs\]"):
        load_config(p)
