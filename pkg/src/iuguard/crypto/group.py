"""BLS12-381 group layer.

Scalars are plain Python ints kept reduced modulo ``R``. Group elements are
``py_arkworks_bls12381`` points; everything that crosses a trust boundary goes
through the strict decoders below, which reject non-canonical input.
"""

from __future__ import annotations

import hashlib
import os
import secrets
from functools import lru_cache
from typing import Iterable, Protocol, Sequence

from py_arkworks_bls12381 import GT, G1Point, G2Point, Scalar
from py_ecc.bls.hash_to_curve import hash_to_G1
from py_ecc.bls.point_compression import compress_G1

R = 0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001

SCALAR_BYTES = 32
G1_BYTES = 48
G2_BYTES = 96

G1_IDENTITY = G1Point.identity()
G2_IDENTITY = G2Point.identity()
G1_BASE = G1Point()
G2_BASE = G2Point()
GT_ONE = GT.one()


class EncodingError(ValueError):
    """Raised for malformed or non-canonical byte encodings."""


# -- randomness ------------------------------------------------------------


class Rng(Protocol):
    def randbytes(self, n: int) -> bytes: ...


class SystemRng:
    """CSPRNG backed by the operating system."""

    def randbytes(self, n: int) -> bytes:
        return secrets.token_bytes(n)


DETERMINISTIC_ENV = "IUGUARD_ALLOW_DETERMINISTIC_RNG"


class DeterministicRng:
    """SHAKE-256 keystream for reproducible test fixtures.

    Refuses to construct unless ``IUGUARD_ALLOW_DETERMINISTIC_RNG=1`` is set,
    so production processes can never end up with predictable blinding.
    """

    def __init__(self, seed: bytes):
        if os.environ.get(DETERMINISTIC_ENV) != "1":
            raise RuntimeError(
                f"deterministic randomness is disabled; set {DETERMINISTIC_ENV}=1 in test harnesses only"
            )
        self._seed = bytes(seed)
        self._counter = 0

    def randbytes(self, n: int) -> bytes:
        out = hashlib.shake_256(
            b"iuguard-drng" + self._seed + self._counter.to_bytes(8, "big")
        ).digest(n)
        self._counter += 1
        return out


DEFAULT_RNG: Rng = SystemRng()


def random_scalar(rng: Rng | None = None) -> int:
    # 64 bytes reduced mod R: statistical bias below 2^-250
    return int.from_bytes((rng or DEFAULT_RNG).randbytes(64), "big") % R


def random_nonzero_scalar(rng: Rng | None = None) -> int:
    while True:
        k = random_scalar(rng)
        if k:
            return k


# -- scalar helpers --------------------------------------------------------


def inv(k: int) -> int:
    if k % R == 0:
        raise ZeroDivisionError("scalar 0 has no inverse")
    return pow(k, -1, R)


def scalar_to_bytes(k: int) -> bytes:
    return (k % R).to_bytes(SCALAR_BYTES, "big")


def scalar_from_bytes(data: bytes) -> int:
    if len(data) != SCALAR_BYTES:
        raise EncodingError(f"scalar must be {SCALAR_BYTES} bytes, got {len(data)}")
    k = int.from_bytes(data, "big")
    if k >= R:
        raise EncodingError("non-canonical scalar")
    return k


def hash_to_scalar(dst: bytes, *parts: bytes) -> int:
    h = hashlib.shake_256()
    h.update(len(dst).to_bytes(2, "big") + dst)
    for p in parts:
        h.update(len(p).to_bytes(8, "big") + p)
    return int.from_bytes(h.digest(64), "big") % R


# -- group helpers ---------------------------------------------------------


def _sc(k: int) -> Scalar:
    return Scalar(k % R)


def mul(point, k: int):
    return point * _sc(k)


def msm(points: Sequence[G1Point], scalars: Iterable[int]) -> G1Point:
    """Multi-scalar multiplication in G1."""
    ks = [k % R for k in scalars]
    if len(ks) != len(points):
        raise ValueError("msm length mismatch")
    pairs = [(p, k) for p, k in zip(points, ks) if k]
    if not pairs:
        return G1_IDENTITY
    if len(pairs) == 1:
        return pairs[0][0] * Scalar(pairs[0][1])
    return G1Point.multiexp_unchecked([p for p, _ in pairs], [Scalar(k) for _, k in pairs])


def pairing_product_is_one(g1s: Sequence[G1Point], g2s: Sequence[G2Point]) -> bool:
    return GT.multi_pairing(list(g1s), list(g2s)) == GT_ONE


def g1_to_bytes(p: G1Point) -> bytes:
    return bytes(p.to_compressed_bytes())


def g2_to_bytes(p: G2Point) -> bytes:
    return bytes(p.to_compressed_bytes())


def g1_from_bytes(data: bytes) -> G1Point:
    if len(data) != G1_BYTES:
        raise EncodingError(f"G1 element must be {G1_BYTES} bytes")
    try:
        p = G1Point.from_compressed_bytes(list(data))
    except (ValueError, TypeError) as exc:
        raise EncodingError(f"invalid G1 encoding: {exc}") from None
    # arkworks tolerates some non-canonical encodings; insist on bit-exact round trip
    if g1_to_bytes(p) != bytes(data):
        raise EncodingError("non-canonical G1 encoding")
    return p


def g2_from_bytes(data: bytes) -> G2Point:
    if len(data) != G2_BYTES:
        raise EncodingError(f"G2 element must be {G2_BYTES} bytes")
    try:
        p = G2Point.from_compressed_bytes(list(data))
    except (ValueError, TypeError) as exc:
        raise EncodingError(f"invalid G2 encoding: {exc}") from None
    if g2_to_bytes(p) != bytes(data):
        raise EncodingError("non-canonical G2 encoding")
    return p


@lru_cache(maxsize=4096)
def hash_to_g1(dst: bytes, message: bytes) -> G1Point:
    """RFC 9380 hash_to_curve (BLS12381G1_XMD:SHA-256_SSWU_RO_)."""
    p = hash_to_G1(message, dst, hashlib.sha256)
    return G1Point.from_compressed_bytes(list(compress_G1(p).to_bytes(G1_BYTES, "big")))
