"""Pedersen commitments C = g^v * h^blind in G1."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .group import G1_BYTES, EncodingError, G1Point, g1_from_bytes, g1_to_bytes, hash_to_g1, msm
from .wire import TAG_COMMITMENT, check_tag

_DST = b"IUGUARD-V01-PEDERSEN_XMD:SHA-256_SSWU_RO_"


@lru_cache(maxsize=1)
def generators() -> tuple[G1Point, G1Point]:
    """The value generator g and the blinding generator h.

    Both come from hash-to-curve, so nobody knows log_g(h).
    """
    return hash_to_g1(_DST, b"value"), hash_to_g1(_DST, b"blind")


@dataclass(frozen=True)
class PedersenCommitment:
    C: G1Point

    def __mul__(self, other: "PedersenCommitment") -> "PedersenCommitment":
        return PedersenCommitment(self.C + other.C)

    def __truediv__(self, other: "PedersenCommitment") -> "PedersenCommitment":
        return PedersenCommitment(self.C - other.C)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PedersenCommitment) and self.C == other.C

    def __hash__(self) -> int:
        return hash(self.to_bytes())

    def to_bytes(self) -> bytes:
        return g1_to_bytes(self.C)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PedersenCommitment":
        return cls(g1_from_bytes(data))

    def serialize(self) -> bytes:
        return TAG_COMMITMENT + self.to_bytes()

    @classmethod
    def deserialize(cls, data: bytes) -> "PedersenCommitment":
        body = check_tag(data, TAG_COMMITMENT)
        if len(body) != G1_BYTES:
            raise EncodingError("commitment length")
        return cls.from_bytes(body)


def commit(v: int, blind: int) -> PedersenCommitment:
    g, h = generators()
    return PedersenCommitment(msm([g, h], [v, blind]))


def commit_public(v: int) -> PedersenCommitment:
    """Commitment with zero blinding, computable by anyone from v."""
    return commit(v, 0)
