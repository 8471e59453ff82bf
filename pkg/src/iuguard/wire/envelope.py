"""Message envelopes and the service error taxonomy."""

from __future__ import annotations

import json
import secrets
from dataclasses import dataclass, field

from .. import canonical

PROTOCOL_VERSION = 1
MAX_BODY_BYTES = 1 << 20

# stable machine-readable codes -> HTTP status
ERROR_STATUS = {
    # envelope / transport
    "MALFORMED_ENVELOPE": 400,
    "UNSUPPORTED_VERSION": 400,
    "BAD_REQUEST": 400,
    "NOT_FOUND": 404,
    "METHOD_NOT_ALLOWED": 405,
    "FORBIDDEN": 403,
    "PAYLOAD_TOO_LARGE": 413,
    "RATE_LIMITED": 429,
    "INTERNAL": 500,
    "UPSTREAM_UNAVAILABLE": 502,
    # issuance
    "NOT_REGISTERED": 404,
    "AUTH_FAILED": 401,
    "PROOF_INVALID": 400,
    "SCHEMA_ERROR": 400,
    # challenges
    "NONCE_UNKNOWN": 409,
    "NONCE_EXPIRED": 409,
    "NONCE_REUSED": 409,
    # presentation verdicts
    "CONTEXT_MISMATCH": 403,
    "SIGNATURE_PROOF_INVALID": 403,
    "RANGE_LOW_INVALID": 403,
    "RANGE_HIGH_INVALID": 403,
    # allocation
    "BAND_OUTSIDE_MANAGED_RANGE": 422,
    "BAND_CONFLICT_IU": 409,
    "GRANT_UNKNOWN": 404,
    # baseline
    "LOGIN_FAILED": 401,
    "SESSION_EXPIRED": 401,
}

DENIAL_CODES = frozenset(
    {
        "CONTEXT_MISMATCH",
        "SIGNATURE_PROOF_INVALID",
        "RANGE_LOW_INVALID",
        "RANGE_HIGH_INVALID",
        "NONCE_UNKNOWN",
        "NONCE_EXPIRED",
        "NONCE_REUSED",
        "BAND_OUTSIDE_MANAGED_RANGE",
        "BAND_CONFLICT_IU",
    }
)


class EnvelopeError(ValueError):
    code = "MALFORMED_ENVELOPE"


class ServiceError(Exception):
    """A protocol-level failure reported by a peer (or raised by a handler)."""

    def __init__(self, code: str, message: str = ""):
        if code not in ERROR_STATUS:
            code, message = "INTERNAL", f"unmapped error code {code}"
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message

    @property
    def status(self) -> int:
        return ERROR_STATUS[self.code]

    @property
    def is_denial(self) -> bool:
        return self.code in DENIAL_CODES


def new_correlation_id() -> str:
    return canonical.b64e(secrets.token_bytes(12))


@dataclass(frozen=True)
class Envelope:
    type: str
    payload: dict = field(default_factory=dict)
    id: str = field(default_factory=new_correlation_id)
    v: int = PROTOCOL_VERSION

    def to_bytes(self) -> bytes:
        return canonical.dumps({"id": self.id, "payload": self.payload, "type": self.type, "v": self.v})

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        """Strict parse: the input must already be in canonical form."""
        if len(data) > MAX_BODY_BYTES:
            raise EnvelopeError("envelope too large")
        try:
            obj = canonical.loads(data)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise EnvelopeError(f"not JSON: {exc}") from None
        if not isinstance(obj, dict) or set(obj) != {"id", "payload", "type", "v"}:
            raise EnvelopeError("envelope needs exactly id, payload, type, v")
        if obj["v"] != PROTOCOL_VERSION or isinstance(obj["v"], bool):
            err = EnvelopeError(f"unsupported protocol version {obj['v']!r}")
            err.code = "UNSUPPORTED_VERSION"
            raise err
        if not isinstance(obj["type"], str) or not isinstance(obj["id"], str) or not isinstance(obj["payload"], dict):
            raise EnvelopeError("bad field types")
        if not 1 <= len(obj["id"]) <= 64:
            raise EnvelopeError("bad correlation id")
        env = cls(obj["type"], obj["payload"], obj["id"], obj["v"])
        if env.to_bytes() != data:
            raise EnvelopeError("envelope is not in canonical form")
        return env

    def reply(self, type_: str, payload: dict) -> "Envelope":
        return Envelope(type_, payload, self.id)

    def error(self, code: str, message: str = "") -> "Envelope":
        return error_envelope(code, message, self.id)


def error_envelope(code: str, message: str = "", corr: str | None = None) -> Envelope:
    return Envelope("error", {"code": code, "message": message}, corr or new_correlation_id())


def raise_for_error(env: Envelope) -> Envelope:
    if env.type == "error":
        raise ServiceError(str(env.payload.get("code", "INTERNAL")), str(env.payload.get("message", "")))
    return env


def get_b64(payload: dict, key: str, size: int | None = None, limit: int = MAX_BODY_BYTES) -> bytes:
    """Decode a required base64url field, mapping every failure to BAD_REQUEST."""
    val = payload.get(key)
    if not isinstance(val, str) or len(val) > limit * 4 // 3 + 4:
        raise ServiceError("BAD_REQUEST", f"missing or oversized field {key!r}")
    try:
        raw = canonical.b64d(val)
    except ValueError:
        raise ServiceError("BAD_REQUEST", f"field {key!r} is not base64url") from None
    if size is not None and len(raw) != size:
        raise ServiceError("BAD_REQUEST", f"field {key!r} must be {size} bytes")
    return raw
