"""Bulletproofs range proofs for a single Pedersen-committed value.

Proves ``0 <= v < 2^n`` for ``V = g^v h^gamma`` (the generators of
:mod:`iuguard.crypto.pedersen`), with a logarithmic inner-product argument.
Verification folds the inner-product check into one multi-scalar
multiplication.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .group import (
    G1_IDENTITY,
    R,
    EncodingError,
    G1Point,
    Rng,
    hash_to_g1,
    inv,
    msm,
    random_scalar,
)
from py_arkworks_bls12381 import Scalar
from .pedersen import PedersenCommitment, commit
from .pedersen import generators as pedersen_generators
from .transcript import Transcript
from .wire import TAG_RANGE_PROOF, Reader, Writer

SUPPORTED_BITS = (8, 16, 32)
MAX_BITS = 32

_DST = b"IUGUARD-V01-BULLETPROOFS_XMD:SHA-256_SSWU_RO_"


class RangeError(ValueError):
    """The value to prove lies outside [0, 2^n)."""


@lru_cache(maxsize=1)
def _vector_generators() -> tuple[tuple[G1Point, ...], tuple[G1Point, ...], G1Point]:
    G = tuple(hash_to_g1(_DST, b"G" + i.to_bytes(2, "big")) for i in range(MAX_BITS))
    H = tuple(hash_to_g1(_DST, b"H" + i.to_bytes(2, "big")) for i in range(MAX_BITS))
    return G, H, hash_to_g1(_DST, b"U")


@dataclass(frozen=True)
class RangeProof:
    bits: int
    A: G1Point
    S: G1Point
    T1: G1Point
    T2: G1Point
    tau_x: int
    mu: int
    t_hat: int
    L: tuple[G1Point, ...]
    R: tuple[G1Point, ...]
    a: int
    b: int

    def serialize(self) -> bytes:
        w = Writer(TAG_RANGE_PROOF).u8(self.bits)
        for p in (self.A, self.S, self.T1, self.T2):
            w.g1(p)
        for k in (self.tau_x, self.mu, self.t_hat):
            w.scalar(k)
        for left, right in zip(self.L, self.R):
            w.g1(left).g1(right)
        return w.scalar(self.a).scalar(self.b).getvalue()

    @classmethod
    def deserialize(cls, data: bytes) -> "RangeProof":
        rd = Reader(data, TAG_RANGE_PROOF)
        n = rd.u8()
        if n not in SUPPORTED_BITS:
            raise EncodingError(f"unsupported bit width {n}")
        A, S, T1, T2 = rd.g1(), rd.g1(), rd.g1(), rd.g1()
        tau_x, mu, t_hat = rd.scalar(), rd.scalar(), rd.scalar()
        Ls, Rs = [], []
        for _ in range(n.bit_length() - 1):
            Ls.append(rd.g1())
            Rs.append(rd.g1())
        a, b = rd.scalar(), rd.scalar()
        rd.done()
        return cls(n, A, S, T1, T2, tau_x, mu, t_hat, tuple(Ls), tuple(Rs), a, b)


def _powers(x: int, n: int) -> list[int]:
    out, acc = [], 1
    for _ in range(n):
        out.append(acc)
        acc = acc * x % R
    return out


def _inner(a, b) -> int:
    return sum(x * y for x, y in zip(a, b)) % R


def _delta(y: int, z: int, n: int) -> int:
    z2 = z * z % R
    sum_y = sum(_powers(y, n)) % R
    sum_2 = (1 << n) - 1
    return ((z - z2) * sum_y - z2 * z % R * sum_2) % R


def _start(V: PedersenCommitment, n: int, context: bytes) -> Transcript:
    tr = Transcript(b"iuguard-rangeproof-v1")
    tr.absorb(b"context", context)
    tr.absorb(b"n", bytes([n]))
    tr.absorb_g1(b"V", V.C)
    return tr


def prove_range(
    v: int, blind: int, n: int, context: bytes = b"", rng: Rng | None = None
) -> tuple[PedersenCommitment, RangeProof]:
    """Commit to ``v`` with ``blind`` and prove it fits in ``n`` bits."""
    if n not in SUPPORTED_BITS:
        raise ValueError(f"bit width must be one of {SUPPORTED_BITS}")
    if not 0 <= v < (1 << n):
        raise RangeError(f"value outside [0, 2^{n})")
    V = commit(v, blind)
    return V, _prove(v, blind % R, n, V, context, rng)


def _prove(v: int, gamma: int, n: int, V: PedersenCommitment, context: bytes, rng: Rng | None) -> RangeProof:
    # Also used by tests with out-of-range v to confirm the verifier rejects.
    g, h = pedersen_generators()
    G_all, H_all, U = _vector_generators()
    G, H = list(G_all[:n]), list(H_all[:n])
    tr = _start(V, n, context)

    aL = [(v >> i) & 1 for i in range(n)]
    aR = [(x - 1) % R for x in aL]
    alpha = random_scalar(rng)
    # aL is a bit vector and aR = aL - 1, so A needs only point additions
    A = h * Scalar(alpha)
    for i in range(n):
        A = A + G[i] if aL[i] else A - H[i]
    sL = [random_scalar(rng) for _ in range(n)]
    sR = [random_scalar(rng) for _ in range(n)]
    rho = random_scalar(rng)
    S = msm([h] + G + H, [rho] + sL + sR)
    tr.absorb_g1(b"A", A)
    tr.absorb_g1(b"S", S)
    y = tr.challenge_nonzero(b"y")
    z = tr.challenge_nonzero(b"z")

    z2 = z * z % R
    yn = _powers(y, n)
    two_n = [1 << i for i in range(n)]
    l0 = [(a - z) % R for a in aL]
    l1 = sL
    r0 = [(yn[i] * (aR[i] + z) + z2 * two_n[i]) % R for i in range(n)]
    r1 = [yn[i] * sR[i] % R for i in range(n)]
    t1 = (_inner(l0, r1) + _inner(l1, r0)) % R
    t2 = _inner(l1, r1)
    tau1, tau2 = random_scalar(rng), random_scalar(rng)
    T1 = msm([g, h], [t1, tau1])
    T2 = msm([g, h], [t2, tau2])
    tr.absorb_g1(b"T1", T1)
    tr.absorb_g1(b"T2", T2)
    x = tr.challenge_nonzero(b"x")

    tau_x = (tau2 * x * x + tau1 * x + z2 * gamma) % R
    mu = (alpha + rho * x) % R
    lv = [(l0[i] + l1[i] * x) % R for i in range(n)]
    rv = [(r0[i] + r1[i] * x) % R for i in range(n)]
    t_hat = _inner(lv, rv)
    tr.absorb_scalar(b"tau_x", tau_x)
    tr.absorb_scalar(b"mu", mu)
    tr.absorb_scalar(b"t_hat", t_hat)
    w = tr.challenge_nonzero(b"w")
    Q = U * Scalar(w)

    # Inner-product argument. Folded generators are never materialized: each
    # original G_t/H_t keeps a running coefficient, and every L/R is a single MSM
    # over the original bases. Current index of base t is t mod len(a).
    g_coef = [1] * n
    h_coef = _powers(inv(y), n)  # H' = H^(y^-i)
    a, b = lv, rv
    Ls, Rs = [], []
    while len(a) > 1:
        size = len(a)
        m = size // 2
        a_lo, a_hi, b_lo, b_hi = a[:m], a[m:], b[:m], b[m:]
        l_sc, r_sc = [], []
        for t in range(n):
            c = t % size
            if c >= m:
                l_sc.append(a_lo[c - m] * g_coef[t])
                r_sc.append(0)
            else:
                l_sc.append(0)
                r_sc.append(a_hi[c] * g_coef[t])
        for t in range(n):
            c = t % size
            if c < m:
                l_sc.append(b_hi[c] * h_coef[t])
                r_sc.append(0)
            else:
                l_sc.append(0)
                r_sc.append(b_lo[c - m] * h_coef[t])
        Lp = msm(G + H + [Q], l_sc + [_inner(a_lo, b_hi)])
        Rp = msm(G + H + [Q], r_sc + [_inner(a_hi, b_lo)])
        tr.absorb_g1(b"L", Lp)
        tr.absorb_g1(b"R", Rp)
        u = tr.challenge_nonzero(b"u")
        u_inv = inv(u)
        Ls.append(Lp)
        Rs.append(Rp)
        a = [(a_lo[i] * u + a_hi[i] * u_inv) % R for i in range(m)]
        b = [(b_lo[i] * u_inv + b_hi[i] * u) % R for i in range(m)]
        for t in range(n):
            lo = t % size < m
            g_coef[t] = g_coef[t] * (u_inv if lo else u) % R
            h_coef[t] = h_coef[t] * (u if lo else u_inv) % R
    return RangeProof(n, A, S, T1, T2, tau_x, mu, t_hat, tuple(Ls), tuple(Rs), a[0], b[0])


def verify_range(V: PedersenCommitment, proof: RangeProof, n: int, context: bytes = b"") -> bool:
    """True iff ``proof`` shows the value committed in ``V`` lies in [0, 2^n)."""
    try:
        return _verify(V, proof, n, context)
    except (ValueError, ZeroDivisionError):
        return False


def _verify(V: PedersenCommitment, proof: RangeProof, n: int, context: bytes) -> bool:
    if n not in SUPPORTED_BITS or proof.bits != n:
        return False
    k = n.bit_length() - 1
    if len(proof.L) != k or len(proof.R) != k:
        return False
    g, h = pedersen_generators()
    G_all, H_all, U = _vector_generators()
    G, H = list(G_all[:n]), list(H_all[:n])

    tr = _start(V, n, context)
    tr.absorb_g1(b"A", proof.A)
    tr.absorb_g1(b"S", proof.S)
    y = tr.challenge_nonzero(b"y")
    z = tr.challenge_nonzero(b"z")
    tr.absorb_g1(b"T1", proof.T1)
    tr.absorb_g1(b"T2", proof.T2)
    x = tr.challenge_nonzero(b"x")
    tr.absorb_scalar(b"tau_x", proof.tau_x)
    tr.absorb_scalar(b"mu", proof.mu)
    tr.absorb_scalar(b"t_hat", proof.t_hat)
    w = tr.challenge_nonzero(b"w")
    us = []
    for Lp, Rp in zip(proof.L, proof.R):
        tr.absorb_g1(b"L", Lp)
        tr.absorb_g1(b"R", Rp)
        us.append(tr.challenge_nonzero(b"u"))
    us_inv = [inv(u) for u in us]

    # s_i = prod_j u_j^(+1 if bit (k-1-j) of i is set else -1)
    s = [1] * n
    for i in range(n):
        acc = 1
        for j in range(k):
            acc = acc * (us[j] if (i >> (k - 1 - j)) & 1 else us_inv[j]) % R
        s[i] = acc
    s_inv = [0] * n
    for i in range(n):
        # flipping every bit of i inverts s_i
        s_inv[i] = s[n - 1 - i]

    z2 = z * z % R
    y_inv_pows = _powers(inv(y), n)
    a, b = proof.a, proof.b
    # random weight to fold the polynomial-commitment check into the same MSM
    c = random_scalar()

    bases = [proof.A, proof.S] + G + H + [h, U, g, V.C, proof.T1, proof.T2] + list(proof.L) + list(proof.R)
    scalars = [1, x]
    scalars += [(-z - a * s[i]) % R for i in range(n)]
    scalars += [(z + z2 * (1 << i) % R * y_inv_pows[i] - b * y_inv_pows[i] % R * s_inv[i]) % R for i in range(n)]
    delta = _delta(y, z, n)
    scalars += [
        (-proof.mu + c * proof.tau_x) % R,  # h
        w * (proof.t_hat - a * b) % R,  # U
        c * (proof.t_hat - delta) % R,  # g
        -c * z2 % R,  # V
        -c * x % R,  # T1
        -c * x * x % R,  # T2
    ]
    scalars += [u * u % R for u in us]
    scalars += [ui * ui % R for ui in us_inv]
    return msm(bases, scalars) == G1_IDENTITY
