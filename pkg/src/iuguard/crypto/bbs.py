"""BBS+ multi-message signatures over BLS12-381.

Signatures live in G1, public keys in G2. A signature on ``m_0..m_{L-1}`` is
``(A, e, s)`` with ``A = (g1 * h_0^s * prod h_{i+1}^{m_i})^(1/(sk+e))``.

Besides plain sign/verify this module provides blind issuance (the holder
commits to some messages, the signer never sees them) and a zero-knowledge
proof of signature possession in the style of Camenisch-Drijvers-Lehmann,
extended with Pedersen "linking" commitments to chosen hidden messages so
that other proofs can reason about those values.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

from .group import (
    G1_BASE,
    G1_IDENTITY,
    G2_BASE,
    G2_IDENTITY,
    R,
    EncodingError,
    G1Point,
    G2Point,
    Rng,
    g2_to_bytes,
    hash_to_g1,
    hash_to_scalar,
    inv,
    msm,
    mul,
    pairing_product_is_one,
    random_nonzero_scalar,
    random_scalar,
)
from .pedersen import PedersenCommitment
from .pedersen import generators as pedersen_generators
from .transcript import Transcript
from .wire import TAG_BLIND_POK, TAG_PUBLIC_KEY, TAG_SIGNATURE, TAG_SPK, Reader, Writer

MAX_MESSAGES = 64

_GEN_DST = b"IUGUARD-V01-BBS-GENERATORS_XMD:SHA-256_SSWU_RO_"
_KEYGEN_DST = b"IUGUARD-V01-BBS-KEYGEN"


class SchemaError(ValueError):
    """Message count or index layout does not fit the key's schema."""


class ProofOfKnowledgeError(ValueError):
    """A proof of knowledge attached to a request did not verify."""


class InvalidSignatureError(ValueError):
    pass


# -- keys ------------------------------------------------------------------


@lru_cache(maxsize=64)
def _derive_generators(pk_bytes: bytes, message_count: int) -> tuple[G1Point, ...]:
    seed = pk_bytes + message_count.to_bytes(2, "big")
    gens = tuple(
        hash_to_g1(_GEN_DST, seed + i.to_bytes(2, "big")) for i in range(message_count + 1)
    )
    encodings = {bytes(g.to_compressed_bytes()) for g in gens}
    if len(encodings) != len(gens) or any(g == G1_IDENTITY for g in gens):
        raise RuntimeError("degenerate generator derivation")
    return gens


@dataclass(frozen=True)
class PublicKey:
    w: G2Point
    message_count: int

    @property
    def generators(self) -> tuple[G1Point, ...]:
        """h_0 (blinding slot) followed by one generator per message."""
        return _derive_generators(g2_to_bytes(self.w), self.message_count)

    @property
    def fingerprint(self) -> bytes:
        return hashlib.sha256(b"iuguard-issuer-fp" + self.serialize()).digest()

    def serialize(self) -> bytes:
        return Writer(TAG_PUBLIC_KEY).u16(self.message_count).g2(self.w).getvalue()

    @classmethod
    def deserialize(cls, data: bytes) -> "PublicKey":
        rd = Reader(data, TAG_PUBLIC_KEY)
        count = rd.u16()
        w = rd.g2()
        rd.done()
        _check_count(count)
        if w == G2_IDENTITY:
            raise EncodingError("identity public key")
        return cls(w, count)


@dataclass(frozen=True)
class SignerKeyPair:
    sk: int = field(repr=False)
    public: PublicKey

    @property
    def pk(self) -> G2Point:
        return self.public.w

    @property
    def gens(self) -> tuple[G1Point, ...]:
        return self.public.generators

    @property
    def message_count(self) -> int:
        return self.public.message_count


def _check_count(message_count: int) -> None:
    if not 1 <= message_count <= MAX_MESSAGES:
        raise SchemaError(f"message count must be in [1, {MAX_MESSAGES}], got {message_count}")


def keygen(seed: bytes, message_count: int) -> SignerKeyPair:
    """Deterministic key generation from a 32-byte seed."""
    _check_count(message_count)
    if len(seed) != 32:
        raise ValueError("seed must be 32 bytes")
    sk = hash_to_scalar(_KEYGEN_DST, seed)
    ctr = 0
    while sk == 0:
        ctr += 1
        sk = hash_to_scalar(_KEYGEN_DST, seed, ctr.to_bytes(4, "big"))
    return SignerKeyPair(sk, PublicKey(mul(G2_BASE, sk), message_count))


# -- signatures --------------------------------------------------------------


@dataclass(frozen=True)
class MultiMessageSignature:
    A: G1Point
    e: int
    s: int

    def serialize(self) -> bytes:
        return Writer(TAG_SIGNATURE).g1(self.A).scalar(self.e).scalar(self.s).getvalue()

    @classmethod
    def deserialize(cls, data: bytes) -> "MultiMessageSignature":
        rd = Reader(data, TAG_SIGNATURE)
        sig = cls(rd.g1(), rd.scalar(), rd.scalar())
        rd.done()
        return sig


def _message_base(pk: PublicKey, messages: Sequence[int], s: int) -> G1Point:
    # B = g1 * h_0^s * prod h_{i+1}^{m_i}
    gens = pk.generators
    return G1_BASE + msm(list(gens[: len(messages) + 1]), [s, *messages])


def _check_messages(pk: PublicKey, messages: Sequence[int]) -> None:
    if len(messages) != pk.message_count:
        raise SchemaError(f"expected {pk.message_count} messages, got {len(messages)}")


def sign_with(kp: SignerKeyPair, messages: Sequence[int], e: int, s: int) -> MultiMessageSignature:
    """Sign with caller-chosen (e, s). Fixture generation only."""
    _check_messages(kp.public, messages)
    B = _message_base(kp.public, messages, s)
    return MultiMessageSignature(mul(B, inv(kp.sk + e)), e % R, s % R)


def sign(kp: SignerKeyPair, messages: Sequence[int], rng: Rng | None = None) -> MultiMessageSignature:
    while True:
        e = random_scalar(rng)
        if (kp.sk + e) % R:
            break
    return sign_with(kp, messages, e, random_scalar(rng))


def verify_signature(pk: PublicKey, messages: Sequence[int], sig: MultiMessageSignature) -> bool:
    if len(messages) != pk.message_count or sig.A == G1_IDENTITY:
        return False
    B = _message_base(pk, messages, sig.s)
    # e(A, w * g2^e) == e(B, g2)
    return pairing_product_is_one([sig.A, -B], [pk.w + mul(G2_BASE, sig.e), G2_BASE])


# -- blind issuance ----------------------------------------------------------


@dataclass(frozen=True)
class BlindCommitmentProof:
    """Schnorr proof of knowledge of (s', m_i for hidden i) opening a blind commitment."""

    indices: tuple[int, ...]
    challenge: int
    z_blind: int
    z_messages: tuple[int, ...]

    def serialize(self) -> bytes:
        w = Writer(TAG_BLIND_POK).u8(len(self.indices))
        for i in self.indices:
            w.u8(i)
        w.scalar(self.challenge).scalar(self.z_blind)
        for z in self.z_messages:
            w.scalar(z)
        return w.getvalue()

    @classmethod
    def deserialize(cls, data: bytes) -> "BlindCommitmentProof":
        rd = Reader(data, TAG_BLIND_POK)
        n = rd.u8()
        idx = tuple(rd.u8() for _ in range(n))
        c, zb = rd.scalar(), rd.scalar()
        zm = tuple(rd.scalar() for _ in range(n))
        rd.done()
        return cls(idx, c, zb, zm)


def _blind_transcript(pk: PublicKey, context: bytes, indices, U, T) -> int:
    tr = Transcript(b"iuguard-blind-commit-v1")
    tr.absorb(b"pk", pk.serialize())
    tr.absorb(b"context", context)
    tr.absorb(b"indices", bytes(indices))
    tr.absorb_g1(b"U", U)
    tr.absorb_g1(b"T", T)
    return tr.challenge(b"c")


def blind_commit(
    pk: PublicKey, hidden: Mapping[int, int], context: bytes, rng: Rng | None = None
) -> tuple[G1Point, BlindCommitmentProof, int]:
    """Holder side: commit to ``hidden`` messages as U = h_0^s' * prod h_{i+1}^{m_i}.

    Returns (U, proof, s'). Keep s' to unblind the issued signature.
    """
    indices = tuple(sorted(hidden))
    if not indices or any(not 0 <= i < pk.message_count for i in indices):
        raise SchemaError("hidden indices out of range")
    gens = pk.generators
    bases = [gens[0]] + [gens[i + 1] for i in indices]
    blinding = random_scalar(rng)
    witness = [blinding] + [hidden[i] % R for i in indices]
    U = msm(bases, witness)
    tildes = [random_scalar(rng) for _ in bases]
    T = msm(bases, tildes)
    c = _blind_transcript(pk, context, indices, U, T)
    z = [(t + c * w) % R for t, w in zip(tildes, witness)]
    return U, BlindCommitmentProof(indices, c, z[0], tuple(z[1:])), blinding


def verify_blind_commitment(pk: PublicKey, U: G1Point, proof: BlindCommitmentProof, context: bytes) -> bool:
    if len(proof.z_messages) != len(proof.indices):
        return False
    if any(not 0 <= i < pk.message_count for i in proof.indices):
        return False
    if list(proof.indices) != sorted(set(proof.indices)):
        return False
    gens = pk.generators
    bases = [gens[0]] + [gens[i + 1] for i in proof.indices] + [U]
    T = msm(bases, [proof.z_blind, *proof.z_messages, -proof.challenge])
    return _blind_transcript(pk, context, proof.indices, U, T) == proof.challenge


def blind_sign(
    kp: SignerKeyPair,
    hidden_commitment: G1Point,
    hidden_pok: BlindCommitmentProof,
    known: Sequence[tuple[int, int]],
    context: bytes,
    rng: Rng | None = None,
) -> MultiMessageSignature:
    """Signer side: sign the committed messages plus the ``known`` (index, value) pairs.

    The returned signature's ``s`` is only the signer's share; the holder adds
    its own blinding with :func:`unblind_signature`.
    """
    L = kp.message_count
    known_idx = [i for i, _ in known]
    hidden_idx = list(hidden_pok.indices)
    if len(set(known_idx)) != len(known_idx) or set(known_idx) & set(hidden_idx):
        raise SchemaError("overlapping message indices")
    if sorted(known_idx + hidden_idx) != list(range(L)):
        raise SchemaError("message indices must cover every slot exactly once")
    if hidden_commitment == G1_IDENTITY or not verify_blind_commitment(
        kp.public, hidden_commitment, hidden_pok, context
    ):
        raise ProofOfKnowledgeError("blind commitment proof rejected")
    gens = kp.gens
    while True:
        e = random_scalar(rng)
        if (kp.sk + e) % R:
            break
    s2 = random_scalar(rng)
    known_sorted = sorted(known)
    B = G1_BASE + hidden_commitment + msm(
        [gens[0]] + [gens[i + 1] for i, _ in known_sorted], [s2] + [m for _, m in known_sorted]
    )
    return MultiMessageSignature(mul(B, inv(kp.sk + e)), e, s2)


def unblind_signature(sig: MultiMessageSignature, blinding: int) -> MultiMessageSignature:
    return MultiMessageSignature(sig.A, sig.e, (sig.s + blinding) % R)


# -- proof of knowledge of a signature ----------------------------------------


@dataclass(frozen=True)
class LinkOpening:
    value: int
    blind: int


@dataclass(frozen=True)
class SignatureProofOfKnowledge:
    message_count: int
    disclosed: tuple[tuple[int, int], ...]
    link_indices: tuple[int, ...]
    A_prime: G1Point
    A_bar: G1Point
    d: G1Point
    link_commitments: tuple[PedersenCommitment, ...]
    challenge: int
    z_e: int
    z_r2: int
    z_r3: int
    z_s: int
    z_messages: tuple[int, ...]  # one per hidden index, ascending
    z_link_blinds: tuple[int, ...]

    @property
    def hidden_indices(self) -> tuple[int, ...]:
        shown = {i for i, _ in self.disclosed}
        return tuple(i for i in range(self.message_count) if i not in shown)

    def randomized_elements(self) -> list[G1Point]:
        return [self.A_prime, self.A_bar, self.d, *(c.C for c in self.link_commitments)]

    def serialize(self) -> bytes:
        w = Writer(TAG_SPK).u8(self.message_count).u8(len(self.disclosed))
        for i, m in self.disclosed:
            w.u8(i).scalar(m)
        w.u8(len(self.link_indices))
        for i in self.link_indices:
            w.u8(i)
        w.g1(self.A_prime).g1(self.A_bar).g1(self.d)
        for c in self.link_commitments:
            w.g1(c.C)
        for k in (self.challenge, self.z_e, self.z_r2, self.z_r3, self.z_s):
            w.scalar(k)
        for k in self.z_messages + self.z_link_blinds:
            w.scalar(k)
        return w.getvalue()

    @classmethod
    def deserialize(cls, data: bytes) -> "SignatureProofOfKnowledge":
        rd = Reader(data, TAG_SPK)
        L = rd.u8()
        _check_count(L)
        nd = rd.u8()
        disclosed = tuple((rd.u8(), rd.scalar()) for _ in range(nd))
        nl = rd.u8()
        links = tuple(rd.u8() for _ in range(nl))
        A_prime, A_bar, d = rd.g1(), rd.g1(), rd.g1()
        comms = tuple(PedersenCommitment(rd.g1()) for _ in range(nl))
        c, z_e, z_r2, z_r3, z_s = (rd.scalar() for _ in range(5))
        shown = {i for i, _ in disclosed}
        n_hidden = L - len(shown)
        z_m = tuple(rd.scalar() for _ in range(max(n_hidden, 0)))
        z_b = tuple(rd.scalar() for _ in range(nl))
        rd.done()
        proof = cls(L, disclosed, links, A_prime, A_bar, d, comms, c, z_e, z_r2, z_r3, z_s, z_m, z_b)
        _check_layout(L, [i for i, _ in disclosed], links)
        return proof


def _check_layout(L: int, disclosed_idx: Sequence[int], link_indices: Sequence[int]) -> None:
    if any(not 0 <= i < L for i in [*disclosed_idx, *link_indices]):
        raise SchemaError("index out of range")
    if list(disclosed_idx) != sorted(set(disclosed_idx)):
        raise SchemaError("disclosed indices must be strictly ascending")
    if list(link_indices) != sorted(set(link_indices)):
        raise SchemaError("link indices must be strictly ascending")
    if set(link_indices) & set(disclosed_idx):
        raise SchemaError("cannot link a disclosed message")


def _spk_challenge(pk: PublicKey, context: bytes, proof_head, T1, T2, T_links) -> int:
    L, disclosed, links, A_prime, A_bar, d, comms = proof_head
    tr = Transcript(b"iuguard-spk-v1")
    tr.absorb(b"pk", pk.serialize())
    tr.absorb(b"context", context)
    tr.absorb(b"layout", bytes([L, len(disclosed), *[i for i, _ in disclosed], len(links), *links]))
    for _, m in disclosed:
        tr.absorb_scalar(b"disclosed", m)
    tr.absorb_g1(b"A'", A_prime)
    tr.absorb_g1(b"Abar", A_bar)
    tr.absorb_g1(b"d", d)
    for c in comms:
        tr.absorb_g1(b"C", c.C)
    tr.absorb_g1(b"T1", T1)
    tr.absorb_g1(b"T2", T2)
    for t in T_links:
        tr.absorb_g1(b"TC", t)
    return tr.challenge(b"c")


def spk_prove(
    pk: PublicKey,
    sig: MultiMessageSignature,
    messages: Sequence[int],
    link_indices: Sequence[int],
    context: bytes,
    disclosed_indices: Sequence[int] = (),
    rng: Rng | None = None,
) -> tuple[SignatureProofOfKnowledge, dict[int, LinkOpening]]:
    """Prove knowledge of ``sig`` on ``messages`` without revealing it.

    For each index in ``link_indices`` a fresh Pedersen commitment to that
    message is attached and bound into the proof. Returns the proof and the
    commitment openings, keyed by message index.
    """
    if not verify_signature(pk, messages, sig):
        raise InvalidSignatureError("cannot prove possession of an invalid signature")
    L = pk.message_count
    links = tuple(sorted(set(link_indices)))
    disc = tuple(sorted(set(disclosed_indices)))
    _check_layout(L, disc, links)
    hidden = [i for i in range(L) if i not in disc]
    msgs = [m % R for m in messages]
    gens = pk.generators
    g, h = pedersen_generators()

    r1 = random_nonzero_scalar(rng)
    r2 = random_scalar(rng)
    r3 = inv(r1)
    B = _message_base(pk, msgs, sig.s)
    A_prime = mul(sig.A, r1)
    A_bar = msm([A_prime, B], [-sig.e, r1])
    d = msm([B, gens[0]], [r1, -r2])
    s_prime = (sig.s - r2 * r3) % R

    blinds = {i: random_scalar(rng) for i in links}
    comms = tuple(PedersenCommitment(msm([g, h], [msgs[i], blinds[i]])) for i in links)

    t_e, t_r2, t_r3, t_s = (random_scalar(rng) for _ in range(4))
    t_m = {i: random_scalar(rng) for i in hidden}
    t_b = {i: random_scalar(rng) for i in links}

    T1 = msm([A_prime, gens[0]], [-t_e, t_r2])
    T2 = msm([d, gens[0]] + [gens[i + 1] for i in hidden], [t_r3, -t_s] + [-t_m[i] for i in hidden])
    T_links = [msm([g, h], [t_m[i], t_b[i]]) for i in links]

    disclosed = tuple((i, msgs[i]) for i in disc)
    head = (L, disclosed, links, A_prime, A_bar, d, comms)
    c = _spk_challenge(pk, context, head, T1, T2, T_links)

    proof = SignatureProofOfKnowledge(
        message_count=L,
        disclosed=disclosed,
        link_indices=links,
        A_prime=A_prime,
        A_bar=A_bar,
        d=d,
        link_commitments=comms,
        challenge=c,
        z_e=(t_e + c * sig.e) % R,
        z_r2=(t_r2 + c * r2) % R,
        z_r3=(t_r3 + c * r3) % R,
        z_s=(t_s + c * s_prime) % R,
        z_messages=tuple((t_m[i] + c * msgs[i]) % R for i in hidden),
        z_link_blinds=tuple((t_b[i] + c * blinds[i]) % R for i in links),
    )
    return proof, {i: LinkOpening(msgs[i], blinds[i]) for i in links}


def spk_verify(
    pk: PublicKey, proof: SignatureProofOfKnowledge, context: bytes
) -> tuple[bool, dict[int, PedersenCommitment]]:
    """Check a signature proof. On success also returns the linking commitments by index."""
    try:
        ok = _spk_verify(pk, proof, context)
    except (SchemaError, ValueError, ZeroDivisionError):
        ok = False
    if not ok:
        return False, {}
    return True, dict(zip(proof.link_indices, proof.link_commitments))


def _spk_verify(pk: PublicKey, proof: SignatureProofOfKnowledge, context: bytes) -> bool:
    L = pk.message_count
    if proof.message_count != L:
        return False
    _check_layout(L, [i for i, _ in proof.disclosed], proof.link_indices)
    hidden = proof.hidden_indices
    if len(proof.z_messages) != len(hidden) or len(proof.z_link_blinds) != len(proof.link_indices):
        return False
    if len(proof.link_commitments) != len(proof.link_indices):
        return False
    if proof.A_prime == G1_IDENTITY:
        return False
    # e(A', w) == e(Abar, g2)
    if not pairing_product_is_one([proof.A_prime, -proof.A_bar], [pk.w, G2_BASE]):
        return False

    gens = pk.generators
    g, h = pedersen_generators()
    c = proof.challenge
    z_m = dict(zip(hidden, proof.z_messages))

    # T1 = A'^-z_e * h0^z_r2 * (Abar / d)^-c
    T1 = msm([proof.A_prime, gens[0], proof.A_bar, proof.d], [-proof.z_e, proof.z_r2, -c, c])
    # T2 = d^z_r3 * h0^-z_s * prod_hidden h^-z_m * (g1 * prod_disclosed h^m)^-c
    pub_bases = [G1_BASE] + [gens[i + 1] for i, _ in proof.disclosed]
    pub_scalars = [-c] + [-c * m for _, m in proof.disclosed]
    T2 = msm(
        [proof.d, gens[0]] + [gens[i + 1] for i in hidden] + pub_bases,
        [proof.z_r3, -proof.z_s] + [-z_m[i] for i in hidden] + pub_scalars,
    )
    T_links = [
        msm([g, h, com.C], [z_m[i], zb, -c])
        for i, com, zb in zip(proof.link_indices, proof.link_commitments, proof.z_link_blinds)
    ]
    head = (L, proof.disclosed, proof.link_indices, proof.A_prime, proof.A_bar, proof.d, proof.link_commitments)
    return _spk_challenge(pk, context, head, T1, T2, T_links) == c
