"""CA, SCS and baseline IIC request handlers.

Handlers never log payloads. CPU-heavy work (issuance, proof verification,
password hashing) runs on the loop's default executor so slow requests do
not stall other connections.
"""

from __future__ import annotations

import asyncio
import logging
import ssl
from typing import Iterable

from .. import canonical
from ..baseline import AccountStore, LoginFailed, SessionExpired
from ..coordinator import Coordinator, Denied, RateLimitedError
from ..credential import (
    AuthenticationError,
    CredentialAuthority,
    CredentialRequest,
    NotRegisteredError,
)
from ..crypto import EncodingError, ProofOfKnowledgeError, SchemaError
from ..nonces import NonceError
from ..presentation import AccessRequest, Presentation
from .envelope import Envelope, ServiceError, get_b64, raise_for_error
from .http import AsyncClient, Endpoint, Request, Router, TransportError, valid_correlation_id

log = logging.getLogger(__name__)


async def _offload(fn, *args):
    return await asyncio.get_running_loop().run_in_executor(None, fn, *args)


def _access_request(payload: dict) -> AccessRequest:
    obj = payload.get("request")
    if not isinstance(obj, dict):
        raise ServiceError("BAD_REQUEST", "missing access request")
    try:
        return AccessRequest.from_payload(obj)
    except ValueError as exc:
        raise ServiceError("BAD_REQUEST", str(exc)) from None


def _mode(payload: dict) -> str:
    mode = payload.get("mode", "authorize")
    if mode not in ("authorize", "verify"):
        raise ServiceError("BAD_REQUEST", "mode must be authorize or verify")
    return mode


def _granted(out) -> dict:
    if isinstance(out, Denied):
        raise ServiceError(out.reason.value)
    grant, report = out
    return {"grant": grant.to_payload(), "preemption": report.to_payload()}


# -- CA ----------------------------------------------------------------------


class CAService:
    def __init__(self, authority: CredentialAuthority):
        self.authority = authority

    def router(self) -> Router:
        r = Router()
        r.add("POST", "/v1/nonce", self.nonce)
        r.add("POST", "/v1/credentials", self.credentials)
        return r

    async def nonce(self, req: Request) -> Envelope:
        env = req.envelope()
        n = self.authority.nonces.issue()
        return env.reply(
            "nonce",
            {"nonce": canonical.b64e(n.value), "expires_at": n.expires_at, "issuer": self.authority.public_key.fingerprint.hex()},
        )

    async def credentials(self, req: Request) -> Envelope:
        env = req.envelope()
        try:
            cred_req = CredentialRequest.deserialize(get_b64(env.payload, "request"))
        except EncodingError as exc:
            raise ServiceError("BAD_REQUEST", f"credential request: {exc}") from None
        try:
            resp = await _offload(self.authority.issue, cred_req)
        except NonceError as exc:
            raise ServiceError(exc.code) from None
        except NotRegisteredError:
            raise ServiceError("NOT_REGISTERED") from None
        except AuthenticationError:
            raise ServiceError("AUTH_FAILED") from None
        except ProofOfKnowledgeError:
            raise ServiceError("PROOF_INVALID") from None
        except SchemaError:
            raise ServiceError("SCHEMA_ERROR") from None
        return env.reply("credential.issued", {"response": canonical.b64e(resp.serialize())})


# -- SCS ---------------------------------------------------------------------


class SCSService:
    def __init__(self, coordinator: Coordinator, plain_peers: Iterable[str] = (), expire_interval_s: float = 1.0):
        self.coordinator = coordinator
        self.plain_peers = {p.lower() for p in plain_peers}
        self.expire_interval_s = expire_interval_s
        self._expiry_task: asyncio.Task | None = None

    def router(self) -> Router:
        r = Router()
        r.add("GET", "/v1/challenge", self.challenge)
        r.add("POST", "/v1/access", self.access)
        r.add("GET", "/v1/grants/{}", self.grant)
        return r

    def start_expiry(self, loop: asyncio.AbstractEventLoop) -> None:
        async def sweep():
            while True:
                await asyncio.sleep(self.expire_interval_s)
                n = self.coordinator.expire_grants()
                if n:
                    log.debug("expired %d grants", n)

        self._expiry_task = loop.create_task(sweep())

    async def challenge(self, req: Request) -> Envelope:
        try:
            n = self.coordinator.issue_challenge(req.remote or "unknown")
        except RateLimitedError:
            raise ServiceError("RATE_LIMITED") from None
        corr = valid_correlation_id(req.headers.get("x-correlation-id"))
        env = Envelope("challenge", {"nonce": canonical.b64e(n.value), "expires_at": n.expires_at})
        return Envelope(env.type, env.payload, corr) if corr else env

    async def access(self, req: Request) -> Envelope:
        env = req.envelope()
        areq = _access_request(env.payload)
        mode = _mode(env.payload)
        if "presentation" not in env.payload:
            if req.peer is None or req.peer not in self.plain_peers:
                raise ServiceError("FORBIDDEN", "plain access is reserved for the IIC")
            if mode == "verify":
                return env.reply("access.verified", {})
            return env.reply("access.granted", _granted(await _offload(self.coordinator.authorize_plain, areq)))
        nonce = get_b64(env.payload, "nonce", size=32)
        try:
            pres = Presentation.deserialize(get_b64(env.payload, "presentation"))
        except EncodingError as exc:
            raise ServiceError("BAD_REQUEST", f"presentation: {exc}") from None
        if mode == "verify":
            reason = await _offload(self.coordinator.verify_only, pres, areq, nonce)
            if reason is not None:
                raise ServiceError(reason.value)
            return env.reply("access.verified", {})
        return env.reply("access.granted", _granted(await _offload(self.coordinator.authorize, pres, areq, nonce)))

    async def grant(self, req: Request) -> Envelope:
        arg = req.arg or ""
        try:
            gid = bytes.fromhex(arg)
        except ValueError:
            gid = b""
        g = self.coordinator.get_grant(gid) if len(gid) == 16 else None
        if g is None:
            raise ServiceError("GRANT_UNKNOWN")
        corr = valid_correlation_id(req.headers.get("x-correlation-id"))
        env = Envelope("grant", {"grant": g.to_payload()})
        return Envelope(env.type, env.payload, corr) if corr else env


# -- IIC baseline --------------------------------------------------------------


class IICService:
    """Password login, then plaintext forwarding of the operational request to the SCS."""

    def __init__(self, accounts: AccountStore, scs: Endpoint, scs_context: ssl.SSLContext, pool_size: int = 16):
        self.accounts = accounts
        self.scs = scs
        self.scs_context = scs_context
        self.pool_size = pool_size
        self._pool: asyncio.Queue | None = None

    def router(self) -> Router:
        r = Router()
        r.add("POST", "/v1/login", self.login)
        r.add("POST", "/v1/report", self.report)
        return r

    async def login(self, req: Request) -> Envelope:
        env = req.envelope()
        user, pw = env.payload.get("username"), env.payload.get("password")
        if not isinstance(user, str) or not isinstance(pw, str):
            raise ServiceError("BAD_REQUEST", "username and password are required")
        try:
            token, expires = await _offload(self.accounts.login, user, pw)
        except LoginFailed:
            raise ServiceError("LOGIN_FAILED") from None
        return env.reply("session", {"session": canonical.b64e(token), "expires_at": expires})

    async def report(self, req: Request) -> Envelope:
        env = req.envelope()
        token = get_b64(env.payload, "session", size=32)
        try:
            self.accounts.check_session(token)
        except SessionExpired:
            raise ServiceError("SESSION_EXPIRED") from None
        areq = _access_request(env.payload)
        if _mode(env.payload) == "verify":
            return env.reply("report.verified", {})
        # identity stays here: only the operational request goes upstream
        upstream = await self._forward(Envelope("access.request", {"request": areq.to_payload(), "mode": "authorize"}))
        return env.reply("access.granted", upstream.payload)

    async def aclose(self) -> None:
        if self._pool is not None:
            while not self._pool.empty():
                await self._pool.get_nowait().close()

    async def _forward(self, env: Envelope) -> Envelope:
        if self._pool is None:
            self._pool = asyncio.Queue()
            for _ in range(self.pool_size):
                self._pool.put_nowait(AsyncClient(self.scs, self.scs_context))
        client = await self._pool.get()
        try:
            reply = await client.call("POST", "/v1/access", env)
        except TransportError as exc:
            log.warning("SCS unreachable: %s", type(exc).__name__)
            raise ServiceError("UPSTREAM_UNAVAILABLE") from None
        finally:
            self._pool.put_nowait(client)
        try:
            return raise_for_error(reply)
        except ServiceError as exc:
            raise ServiceError(exc.code, exc.message) from None
