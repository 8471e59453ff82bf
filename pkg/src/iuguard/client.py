"""Client library for the IU side: issuance, access requests, baseline calls."""

from __future__ import annotations

from dataclasses import dataclass

from . import canonical
from .config import Config
from .credential import (
    Credential,
    IssuanceResponse,
    create_credential_request,
    finalize_credential,
)
from .crypto import PublicKey
from .issuer import load_issuers
from .presentation import AccessRequest, check_authorized, derive_presentation
from .wire.envelope import Envelope, ServiceError, get_b64, raise_for_error
from .wire.http import Client, Endpoint
from .wire.pki import Identity, client_context


@dataclass
class AccessOutcome:
    payload: dict
    presentation_bytes: int = 0

    @property
    def grant_id(self) -> str | None:
        g = self.payload.get("grant")
        return g.get("grant_id") if isinstance(g, dict) else None


class IUClient:
    """Blocking client holding one keep-alive connection per service."""

    def __init__(self, endpoints: dict[str, Endpoint], identity: Identity, root_cert, issuers: dict[bytes, PublicKey], timeout: float = 30.0):
        self.issuers = issuers
        ctx = client_context(identity, root_cert)
        self._clients = {name: Client(ep, ctx, timeout) for name, ep in endpoints.items()}

    @classmethod
    def from_config(cls, cfg: Config, endpoints: dict[str, Endpoint] | None = None, identity: Identity | None = None) -> "IUClient":
        c = cfg.client
        eps = endpoints or {
            "ca": Endpoint(cfg.ca.host, cfg.ca.port, c.ca_pin),
            "scs": Endpoint(cfg.scs.host, cfg.scs.port, c.scs_pin),
            "iic": Endpoint(cfg.iic.host, cfg.iic.port, c.iic_pin),
        }
        return cls(eps, identity or c.identity, cfg.root_cert, load_issuers(c.issuers), c.timeout_s)

    def _call(self, service: str, method: str, path: str, env: Envelope | None = None) -> Envelope:
        return raise_for_error(self._clients[service].call(method, path, env))

    def close(self) -> None:
        for c in self._clients.values():
            c.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # issuance --------------------------------------------------------------

    def obtain_credential(self, iu_id: str, enrollment_secret: bytes) -> Credential:
        reply = self._call("ca", "POST", "/v1/nonce", Envelope("nonce.request"))
        nonce = get_b64(reply.payload, "nonce", size=32)
        issuer_pk = self.issuers.get(bytes.fromhex(str(reply.payload.get("issuer", ""))))
        if issuer_pk is None:
            raise ServiceError("SCHEMA_ERROR", "CA signs with an issuer key that is not in the trusted list")
        req, state = create_credential_request(iu_id, enrollment_secret, nonce, issuer_pk)
        reply = self._call("ca", "POST", "/v1/credentials", Envelope("credential.request", {"request": canonical.b64e(req.serialize())}))
        resp = IssuanceResponse.deserialize(get_b64(reply.payload, "response"))
        return finalize_credential(resp, state, issuer_pk)

    # access ----------------------------------------------------------------

    def challenge(self) -> bytes:
        reply = self._call("scs", "GET", "/v1/challenge")
        return get_b64(reply.payload, "nonce", size=32)

    def request_access(self, cred: Credential, req: AccessRequest, mode: str = "authorize") -> AccessOutcome:
        """challenge, derive, submit. Raises OutOfAuthorizationError before any traffic."""
        check_authorized(cred, req)
        issuer_pk = self.issuers.get(cred.issuer_fp)
        if issuer_pk is None:
            raise ServiceError("SCHEMA_ERROR", "credential issuer is not in the trusted list")
        nonce = self.challenge()
        pres = derive_presentation(cred, issuer_pk, req, nonce).serialize()
        payload = {
            "mode": mode,
            "nonce": canonical.b64e(nonce),
            "presentation": canonical.b64e(pres),
            "request": req.to_payload(),
        }
        reply = self._call("scs", "POST", "/v1/access", Envelope("access.request", payload))
        return AccessOutcome(reply.payload, len(pres))

    def get_grant(self, grant_id: str) -> dict:
        return self._call("scs", "GET", f"/v1/grants/{grant_id}").payload["grant"]

    # baseline --------------------------------------------------------------

    def login(self, username: str, password: str) -> bytes:
        reply = self._call("iic", "POST", "/v1/login", Envelope("login", {"password": password, "username": username}))
        return get_b64(reply.payload, "session", size=32)

    def report(self, session: bytes, req: AccessRequest, mode: str = "authorize") -> AccessOutcome:
        payload = {"mode": mode, "request": req.to_payload(), "session": canonical.b64e(session)}
        return AccessOutcome(self._call("iic", "POST", "/v1/report", Envelope("report", payload)).payload)
