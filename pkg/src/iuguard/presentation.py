"""Anonymous spectrum-access presentations.

A presentation proves, without revealing any credential attribute, that the
holder has a CA-signed credential whose authorized band contains the
requested band::

    f_low <= f_low_req   and   f_high_req <= f_high

The signature proof exports Pedersen commitments C_low, C_high to the hidden
band edges. The verifier forms

    D_low  = g^f_low_req / C_low      (opens to f_low_req - f_low)
    D_high = C_high / g^f_high_req    (opens to f_high - f_high_req)

from public request values and checks a 32-bit range proof on each, which
rules out negative differences.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from . import canonical
from .credential import F_HIGH, F_LOW, SCHEMA, Credential
from .crypto import (
    EncodingError,
    PedersenCommitment,
    PublicKey,
    RangeProof,
    SignatureProofOfKnowledge,
    commit_public,
    prove_range,
    spk_prove,
    spk_verify,
    verify_range,
)
from .crypto.group import G1_BYTES, Rng, g1_from_bytes, scalar_to_bytes
from .crypto.wire import TAG_PRESENTATION, Reader, Writer
from .nonces import Nonce

RANGE_BITS = 32
U32_MAX = 2**32 - 1
U64_MAX = 2**64 - 1
LINK_INDICES = (F_LOW, F_HIGH)


class OutOfAuthorizationError(ValueError):
    """The requested band is not inside the credential's authorized band."""

    code = "OUT_OF_AUTHORIZATION"


@dataclass(frozen=True)
class AccessRequest:
    f_low_req_khz: int
    f_high_req_khz: int
    lat_microdeg: int
    lon_microdeg: int
    start_unix_s: int
    duration_s: int

    def __post_init__(self):
        for name in ("f_low_req_khz", "f_high_req_khz", "lat_microdeg", "lon_microdeg", "start_unix_s", "duration_s"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ValueError(f"{name} must be an integer")
        if not 0 <= self.f_low_req_khz < self.f_high_req_khz <= U32_MAX:
            raise ValueError("requested band must satisfy 0 <= f_low < f_high < 2^32")
        if not 0 < self.duration_s <= U32_MAX:
            raise ValueError("duration_s must be in (0, 2^32)")
        if not 0 <= self.start_unix_s <= U64_MAX:
            raise ValueError("start_unix_s out of range")
        if abs(self.lat_microdeg) > 90_000_000 or abs(self.lon_microdeg) > 180_000_000:
            raise ValueError("location out of range")

    @property
    def band(self) -> tuple[int, int]:
        return self.f_low_req_khz, self.f_high_req_khz

    def to_payload(self) -> dict:
        return {
            "f_low_req_khz": self.f_low_req_khz,
            "f_high_req_khz": self.f_high_req_khz,
            "location": {"lat_microdeg": self.lat_microdeg, "lon_microdeg": self.lon_microdeg},
            "time_window": {"start_unix_s": self.start_unix_s, "duration_s": self.duration_s},
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "AccessRequest":
        try:
            loc, tw = obj["location"], obj["time_window"]
            return cls(
                obj["f_low_req_khz"],
                obj["f_high_req_khz"],
                loc["lat_microdeg"],
                loc["lon_microdeg"],
                tw["start_unix_s"],
                tw["duration_s"],
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed access request: {exc}") from None

    def canonical_bytes(self) -> bytes:
        return canonical.dumps(self.to_payload())


def presentation_context(req: AccessRequest, nonce: Nonce | bytes, issuer_fp: bytes) -> bytes:
    value = nonce.value if isinstance(nonce, Nonce) else nonce
    h = hashlib.sha256(b"iuguard-presentation-context-v1")
    for part in (req.canonical_bytes(), value, issuer_fp):
        h.update(len(part).to_bytes(4, "big") + part)
    return h.digest()


def _range_context(ctx: bytes, spk: SignatureProofOfKnowledge, side: bytes) -> bytes:
    # ties each range proof to this presentation's signature proof
    return b"iuguard-band-" + side + ctx + scalar_to_bytes(spk.challenge)


@dataclass(frozen=True)
class Presentation:
    issuer_fp: bytes
    spk: SignatureProofOfKnowledge
    C_low: PedersenCommitment
    C_high: PedersenCommitment
    range_low: RangeProof
    range_high: RangeProof
    context_digest: bytes

    def serialize(self) -> bytes:
        return (
            Writer(TAG_PRESENTATION)
            .raw(self.issuer_fp)
            .blob(self.spk.serialize())
            .raw(self.C_low.to_bytes())
            .raw(self.C_high.to_bytes())
            .blob(self.range_low.serialize())
            .blob(self.range_high.serialize())
            .raw(self.context_digest)
            .getvalue()
        )

    @classmethod
    def deserialize(cls, data: bytes) -> "Presentation":
        rd = Reader(data, TAG_PRESENTATION)
        fp = rd.raw(32)
        spk = SignatureProofOfKnowledge.deserialize(rd.blob())
        c_low = PedersenCommitment(g1_from_bytes(rd.raw(G1_BYTES)))
        c_high = PedersenCommitment(g1_from_bytes(rd.raw(G1_BYTES)))
        lo = RangeProof.deserialize(rd.blob())
        hi = RangeProof.deserialize(rd.blob())
        digest = rd.raw(32)
        rd.done()
        return cls(fp, spk, c_low, c_high, lo, hi, digest)


def serialize_presentation(pres: Presentation) -> bytes:
    return pres.serialize()


def deserialize_presentation(data: bytes) -> Presentation:
    return Presentation.deserialize(data)


def check_authorized(cred: Credential, req: AccessRequest) -> None:
    if not (cred.f_low_khz <= req.f_low_req_khz and req.f_high_req_khz <= cred.f_high_khz):
        raise OutOfAuthorizationError(
            f"requested [{req.f_low_req_khz}, {req.f_high_req_khz}] kHz is outside the authorized band"
        )


def derive_presentation(
    cred: Credential, issuer_pk: PublicKey, req: AccessRequest, nonce: Nonce | bytes, rng: Rng | None = None
) -> Presentation:
    """Holder side. Raises :class:`OutOfAuthorizationError` before doing any crypto."""
    check_authorized(cred, req)
    if cred.issuer_fp != issuer_pk.fingerprint:
        raise ValueError("credential was not issued under this public key")
    ctx = presentation_context(req, nonce, issuer_pk.fingerprint)
    spk, openings = spk_prove(issuer_pk, cred.signature, cred.messages(), LINK_INDICES, ctx, rng=rng)
    low, high = openings[F_LOW], openings[F_HIGH]
    _, pi_low = prove_range(req.f_low_req_khz - cred.f_low_khz, -low.blind, RANGE_BITS, _range_context(ctx, spk, b"low"), rng)
    _, pi_high = prove_range(cred.f_high_khz - req.f_high_req_khz, high.blind, RANGE_BITS, _range_context(ctx, spk, b"high"), rng)
    c_low, c_high = spk.link_commitments
    return Presentation(issuer_pk.fingerprint, spk, c_low, c_high, pi_low, pi_high, ctx)


class RejectReason(str, Enum):
    CONTEXT_MISMATCH = "CONTEXT_MISMATCH"
    SIGNATURE_PROOF_INVALID = "SIGNATURE_PROOF_INVALID"
    RANGE_LOW_INVALID = "RANGE_LOW_INVALID"
    RANGE_HIGH_INVALID = "RANGE_HIGH_INVALID"


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: RejectReason | None = None

    def __bool__(self) -> bool:
        return self.accepted


ACCEPTED = Verdict(True)


def verify_presentation(
    issuer_keys: PublicKey | Mapping[bytes, PublicKey],
    pres: Presentation,
    req: AccessRequest,
    nonce: Nonce | bytes,
) -> Verdict:
    if isinstance(issuer_keys, PublicKey):
        issuer_keys = {issuer_keys.fingerprint: issuer_keys}
    pk = issuer_keys.get(pres.issuer_fp)
    if pk is None or pk.message_count != SCHEMA.message_count:
        return Verdict(False, RejectReason.SIGNATURE_PROOF_INVALID)
    ctx = presentation_context(req, nonce, pres.issuer_fp)
    if ctx != pres.context_digest:
        return Verdict(False, RejectReason.CONTEXT_MISMATCH)

    spk = pres.spk
    if spk.disclosed or spk.link_indices != LINK_INDICES:
        return Verdict(False, RejectReason.SIGNATURE_PROOF_INVALID)
    ok, comms = spk_verify(pk, spk, ctx)
    if not ok or comms[F_LOW] != pres.C_low or comms[F_HIGH] != pres.C_high:
        return Verdict(False, RejectReason.SIGNATURE_PROOF_INVALID)

    # differences are recomputed here from public values, never taken from the prover
    d_low = commit_public(req.f_low_req_khz) / pres.C_low
    if not verify_range(d_low, pres.range_low, RANGE_BITS, _range_context(ctx, spk, b"low")):
        return Verdict(False, RejectReason.RANGE_LOW_INVALID)
    d_high = pres.C_high / commit_public(req.f_high_req_khz)
    if not verify_range(d_high, pres.range_high, RANGE_BITS, _range_context(ctx, spk, b"high")):
        return Verdict(False, RejectReason.RANGE_HIGH_INVALID)
    return ACCEPTED


def public_regions(data: bytes) -> list[tuple[int, int]]:
    """Byte spans of a serialized presentation that carry no per-proof randomness.

    Covers format tags, length prefixes, layout bytes, the issuer fingerprint
    and the context digest (a hash of public request data). Everything else is
    a randomized group element or a response scalar.
    """
    spans = []
    pos = 0

    def take(n):
        nonlocal pos
        spans.append((pos, pos + n))
        pos += n

    take(2)  # tag
    take(32)  # issuer fp
    spk_len = int.from_bytes(data[pos : pos + 4], "big")
    take(4)
    spk_start = pos
    L, nd = data[pos + 2], data[pos + 3]
    if nd:
        raise EncodingError("presentations never disclose attributes")
    nl = data[pos + 4]
    take(2 + 1 + 1 + 1 + nl)  # tag, L, n_disclosed, n_link, link indices
    pos = spk_start + spk_len
    pos += 2 * G1_BYTES
    for _ in range(2):
        rp_len = int.from_bytes(data[pos : pos + 4], "big")
        take(4)
        rp_start = pos
        take(3)  # tag + bit width
        pos = rp_start + rp_len
    take(32)  # context digest
    if pos != len(data) or L != SCHEMA.message_count:
        raise EncodingError("unexpected presentation layout")
    return spans
