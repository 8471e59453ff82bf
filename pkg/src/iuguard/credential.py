"""Credential issuance: registry, blind issuance and holder-side finalization.

The credential signs four attributes in a frozen order::

    0 link_secret   known only to the holder, signed blindly
    1 iu_id         hash-to-scalar of the pseudonymous identifier
    2 f_low_khz     authorized band, lower edge
    3 f_high_khz    authorized band, upper edge

The CA takes the band from its registry, never from the request.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .crypto import (
    BlindCommitmentProof,
    EncodingError,
    MultiMessageSignature,
    ProofOfKnowledgeError,
    PublicKey,
    SignerKeyPair,
    blind_commit,
    blind_sign,
    hash_to_scalar,
    random_scalar,
    unblind_signature,
    verify_signature,
)
from .crypto.group import Rng
from .crypto.wire import TAG_CRED_REQUEST, TAG_CREDENTIAL, TAG_ISSUANCE, Reader, Writer
from .nonces import NONCE_BYTES, NonceStore

log = logging.getLogger(__name__)

REGISTRY_HEADER = "iuguard-registry v1"
U32_MAX = 2**32 - 1


@dataclass(frozen=True)
class CredentialSchema:
    version: int
    attributes: tuple[str, ...]

    @property
    def message_count(self) -> int:
        return len(self.attributes)

    def index(self, name: str) -> int:
        return self.attributes.index(name)


SCHEMA = CredentialSchema(1, ("link_secret", "iu_id", "f_low_khz", "f_high_khz"))
LINK_SECRET, IU_ID, F_LOW, F_HIGH = range(4)


class RegistryError(ValueError):
    pass


class NotRegisteredError(LookupError):
    code = "NOT_REGISTERED"


class AuthenticationError(PermissionError):
    code = "AUTH_FAILED"


class IssuanceIntegrityError(ValueError):
    code = "ISSUANCE_INTEGRITY"


class HolderStateMismatch(ValueError):
    code = "HOLDER_STATE_MISMATCH"


def encode_iu_id(iu_id: str) -> int:
    return hash_to_scalar(b"IUGUARD-V01-IU-ID", iu_id.encode("utf-8"))


# -- registry ----------------------------------------------------------------


class DeviceType(str, Enum):
    RADAR = "radar"
    SATELLITE_TERMINAL = "satellite_terminal"
    BASE_STATION = "base_station"
    TACTICAL_RADIO = "tactical_radio"
    OTHER = "other"


@dataclass(frozen=True)
class Antenna:
    gain_dbi: float
    orientation_deg: float
    height_m: float


@dataclass(frozen=True)
class RegistryRecord:
    iu_id: str
    device_type: DeviceType
    antenna: Antenna
    max_power_dbm: float
    authorized_f_low_khz: int
    authorized_f_high_khz: int
    system_type: str
    enrollment_secret: bytes = field(repr=False)

    def __post_init__(self):
        if not self.iu_id:
            raise RegistryError("empty iu_id")
        lo, hi = self.authorized_f_low_khz, self.authorized_f_high_khz
        if not (isinstance(lo, int) and isinstance(hi, int) and 0 <= lo < hi <= U32_MAX):
            raise RegistryError(f"{self.iu_id}: need 0 <= f_low < f_high < 2^32, got [{lo}, {hi}]")
        if len(self.enrollment_secret) != 32:
            raise RegistryError(f"{self.iu_id}: enrollment_secret must be 32 bytes")

    def to_json(self) -> dict:
        return {
            "iu_id": self.iu_id,
            "device_type": self.device_type.value,
            "antenna": {
                "gain_dbi": self.antenna.gain_dbi,
                "orientation_deg": self.antenna.orientation_deg,
                "height_m": self.antenna.height_m,
            },
            "max_power_dbm": self.max_power_dbm,
            "authorized_f_low_khz": self.authorized_f_low_khz,
            "authorized_f_high_khz": self.authorized_f_high_khz,
            "system_type": self.system_type,
            "enrollment_secret": self.enrollment_secret.hex(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RegistryRecord":
        try:
            ant = obj["antenna"]
            return cls(
                iu_id=str(obj["iu_id"]),
                device_type=DeviceType(obj["device_type"]),
                antenna=Antenna(float(ant["gain_dbi"]), float(ant["orientation_deg"]), float(ant["height_m"])),
                max_power_dbm=float(obj["max_power_dbm"]),
                authorized_f_low_khz=obj["authorized_f_low_khz"],
                authorized_f_high_khz=obj["authorized_f_high_khz"],
                system_type=str(obj["system_type"]),
                enrollment_secret=bytes.fromhex(obj["enrollment_secret"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, RegistryError):
                raise
            raise RegistryError(f"bad record: {exc}") from None


class Registry(Mapping[str, RegistryRecord]):
    """Immutable iu_id -> record index."""

    def __init__(self, records: Iterable[RegistryRecord]):
        index: dict[str, RegistryRecord] = {}
        for rec in records:
            if rec.iu_id in index:
                raise RegistryError(f"duplicate iu_id {rec.iu_id!r}")
            index[rec.iu_id] = rec
        self._index = index

    def __getitem__(self, iu_id: str) -> RegistryRecord:
        return self._index[iu_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self._index)

    def __len__(self) -> int:
        return len(self._index)


def load_registry(path: str | Path) -> Registry:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != REGISTRY_HEADER:
        head = lines[0].strip() if lines else "<empty>"
        raise RegistryError(f"unsupported registry header {head!r}, expected {REGISTRY_HEADER!r}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            records.append(RegistryRecord.from_json(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise RegistryError(f"line {lineno}: {exc}") from None
        except RegistryError as exc:
            raise RegistryError(f"line {lineno}: {exc}") from None
    try:
        return Registry(records)
    except RegistryError as exc:
        raise RegistryError(f"{path}: {exc}") from None


def write_registry(records: Iterable[RegistryRecord], path: str | Path) -> None:
    lines = [REGISTRY_HEADER] + [json.dumps(r.to_json(), sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- issuance messages -------------------------------------------------------


def enrollment_mac(enrollment_secret: bytes, nonce: bytes, iu_id: str) -> bytes:
    msg = b"iuguard-enroll-v1" + nonce + iu_id.encode("utf-8")
    return hmac.new(enrollment_secret, msg, hashlib.sha256).digest()


def _issuance_context(nonce: bytes, iu_id: str) -> bytes:
    return b"iuguard-issuance-v1" + nonce + iu_id.encode("utf-8")


@dataclass(frozen=True)
class CredentialRequest:
    iu_id: str
    nonce: bytes
    enrollment_mac: bytes
    commitment: object  # G1Point
    pok: BlindCommitmentProof
    # requester-supplied band claim; informational only, the CA ignores it
    claimed_band: tuple[int, int] | None = None

    def serialize(self) -> bytes:
        w = Writer(TAG_CRED_REQUEST).text(self.iu_id).raw(self.nonce).raw(self.enrollment_mac)
        w.g1(self.commitment).blob(self.pok.serialize())
        if self.claimed_band is None:
            w.u8(0)
        else:
            w.u8(1).u32(self.claimed_band[0]).u32(self.claimed_band[1])
        return w.getvalue()

    @classmethod
    def deserialize(cls, data: bytes) -> "CredentialRequest":
        rd = Reader(data, TAG_CRED_REQUEST)
        iu_id = rd.text()
        nonce = rd.raw(NONCE_BYTES)
        mac = rd.raw(32)
        U = rd.g1()
        pok = BlindCommitmentProof.deserialize(rd.blob())
        claimed = (rd.u32(), rd.u32()) if rd.u8() else None
        rd.done()
        return cls(iu_id, nonce, mac, U, pok, claimed)

    def digest(self) -> bytes:
        return hashlib.sha256(b"iuguard-cred-request" + self.serialize()).digest()


@dataclass(frozen=True)
class HolderState:
    """Holder-side secrets for one outstanding request. Never sent anywhere."""

    iu_id: str
    link_secret: int = field(repr=False)
    blinding: int = field(repr=False)
    request_digest: bytes


def create_credential_request(
    iu_id: str,
    enrollment_secret: bytes,
    ca_nonce: bytes,
    issuer_pk: PublicKey,
    claimed_band: tuple[int, int] | None = None,
    rng: Rng | None = None,
) -> tuple[CredentialRequest, HolderState]:
    link_secret = random_scalar(rng)
    U, pok, blinding = blind_commit(issuer_pk, {LINK_SECRET: link_secret}, _issuance_context(ca_nonce, iu_id), rng)
    req = CredentialRequest(
        iu_id=iu_id,
        nonce=ca_nonce,
        enrollment_mac=enrollment_mac(enrollment_secret, ca_nonce, iu_id),
        commitment=U,
        pok=pok,
        claimed_band=claimed_band,
    )
    return req, HolderState(iu_id, link_secret, blinding, req.digest())


@dataclass(frozen=True)
class IssuanceResponse:
    request_digest: bytes
    iu_id: str
    f_low_khz: int
    f_high_khz: int
    signature: MultiMessageSignature
    issuer_fp: bytes

    def serialize(self) -> bytes:
        return (
            Writer(TAG_ISSUANCE)
            .raw(self.request_digest)
            .text(self.iu_id)
            .u32(self.f_low_khz)
            .u32(self.f_high_khz)
            .blob(self.signature.serialize())
            .raw(self.issuer_fp)
            .getvalue()
        )

    @classmethod
    def deserialize(cls, data: bytes) -> "IssuanceResponse":
        rd = Reader(data, TAG_ISSUANCE)
        out = cls(rd.raw(32), rd.text(), rd.u32(), rd.u32(), MultiMessageSignature.deserialize(rd.blob()), rd.raw(32))
        rd.done()
        return out


def issue_credential(
    registry: Mapping[str, RegistryRecord],
    kp: SignerKeyPair,
    req: CredentialRequest,
    nonces: NonceStore,
    rng: Rng | None = None,
) -> IssuanceResponse:
    """CA side of issuance. Consumes ``req.nonce`` whatever the outcome."""
    nonces.consume(req.nonce)
    rec = registry.get(req.iu_id)
    if rec is None:
        raise NotRegisteredError(f"{req.iu_id!r} is not registered")
    expected = enrollment_mac(rec.enrollment_secret, req.nonce, req.iu_id)
    if not hmac.compare_digest(expected, req.enrollment_mac):
        raise AuthenticationError("enrollment proof rejected")
    if req.pok.indices != (LINK_SECRET,):
        raise ProofOfKnowledgeError("request must blind exactly the link-secret slot")
    known = [
        (IU_ID, encode_iu_id(rec.iu_id)),
        (F_LOW, rec.authorized_f_low_khz),
        (F_HIGH, rec.authorized_f_high_khz),
    ]
    sig = blind_sign(kp, req.commitment, req.pok, known, _issuance_context(req.nonce, req.iu_id), rng)
    log.info("issued credential for a registered IU")
    return IssuanceResponse(
        request_digest=req.digest(),
        iu_id=rec.iu_id,
        f_low_khz=rec.authorized_f_low_khz,
        f_high_khz=rec.authorized_f_high_khz,
        signature=sig,
        issuer_fp=kp.public.fingerprint,
    )


class CredentialAuthority:
    """Registry + signing key + one-time nonce store."""

    def __init__(self, registry: Registry, keypair: SignerKeyPair, nonce_ttl_s: float = 60.0, clock=None):
        if keypair.message_count != SCHEMA.message_count:
            raise ValueError("issuer key does not match the credential schema")
        self.registry = registry
        self.keypair = keypair
        self.nonces = NonceStore(nonce_ttl_s, clock) if clock else NonceStore(nonce_ttl_s)

    @property
    def public_key(self) -> PublicKey:
        return self.keypair.public

    def new_nonce(self) -> bytes:
        return self.nonces.issue().value

    def issue(self, req: CredentialRequest, rng: Rng | None = None) -> IssuanceResponse:
        return issue_credential(self.registry, self.keypair, req, self.nonces, rng)


# -- holder ------------------------------------------------------------------


@dataclass(frozen=True)
class Credential:
    schema_version: int
    link_secret: int = field(repr=False)
    iu_id: str
    f_low_khz: int
    f_high_khz: int
    signature: MultiMessageSignature
    issuer_fp: bytes

    def messages(self) -> list[int]:
        return [self.link_secret, encode_iu_id(self.iu_id), self.f_low_khz, self.f_high_khz]

    def verify(self, issuer_pk: PublicKey) -> bool:
        return (
            issuer_pk.fingerprint == self.issuer_fp
            and self.f_low_khz < self.f_high_khz
            and verify_signature(issuer_pk, self.messages(), self.signature)
        )

    def serialize(self) -> bytes:
        return (
            Writer(TAG_CREDENTIAL)
            .u16(self.schema_version)
            .scalar(self.link_secret)
            .text(self.iu_id)
            .u32(self.f_low_khz)
            .u32(self.f_high_khz)
            .blob(self.signature.serialize())
            .raw(self.issuer_fp)
            .getvalue()
        )

    @classmethod
    def deserialize(cls, data: bytes) -> "Credential":
        rd = Reader(data, TAG_CREDENTIAL)
        version = rd.u16()
        if version != SCHEMA.version:
            raise EncodingError(f"unsupported schema version {version}")
        out = cls(version, rd.scalar(), rd.text(), rd.u32(), rd.u32(), MultiMessageSignature.deserialize(rd.blob()), rd.raw(32))
        rd.done()
        return out

    def save(self, path: str | Path) -> None:
        p = Path(path)
        p.write_bytes(self.serialize())
        p.chmod(0o600)

    @classmethod
    def load(cls, path: str | Path) -> "Credential":
        return cls.deserialize(Path(path).read_bytes())


def finalize_credential(response: IssuanceResponse, state: HolderState, issuer_pk: PublicKey) -> Credential:
    if response.request_digest != state.request_digest or response.iu_id != state.iu_id:
        raise HolderStateMismatch("response does not answer this holder's request")
    if response.issuer_fp != issuer_pk.fingerprint:
        raise IssuanceIntegrityError("response names a different issuer")
    cred = Credential(
        schema_version=SCHEMA.version,
        link_secret=state.link_secret,
        iu_id=response.iu_id,
        f_low_khz=response.f_low_khz,
        f_high_khz=response.f_high_khz,
        signature=unblind_signature(response.signature, state.blinding),
        issuer_fp=response.issuer_fp,
    )
    if not cred.verify(issuer_pk):
        raise IssuanceIntegrityError("issued signature does not verify")
    return cred


__all__ = [
    "SCHEMA",
    "Antenna",
    "AuthenticationError",
    "Credential",
    "CredentialAuthority",
    "CredentialRequest",
    "CredentialSchema",
    "DeviceType",
    "HolderState",
    "HolderStateMismatch",
    "IssuanceIntegrityError",
    "IssuanceResponse",
    "NotRegisteredError",
    "Registry",
    "RegistryError",
    "RegistryRecord",
    "create_credential_request",
    "enrollment_mac",
    "encode_iu_id",
    "finalize_credential",
    "issue_credential",
    "load_registry",
    "write_registry",
]
