"""Generate BBS+ fixture vectors with pure-Python py_ecc arithmetic.

This is an independent implementation of key derivation and signing (it
shares no group code with iuguard.crypto) used to freeze expected bytes in
tests/fixtures/bbs_vectors.json.

    python scripts/gen_bbs_vectors.py > tests/fixtures/bbs_vectors.json
"""

import hashlib
import json

from py_ecc.bls.g2_primitives import G1_to_pubkey, G2_to_signature
from py_ecc.bls.hash_to_curve import hash_to_G1
from py_ecc.optimized_bls12_381 import G1, G2, add, curve_order, multiply

DST_GEN = b"IUGUARD-V01-BBS-GENERATORS_XMD:SHA-256_SSWU_RO_"
DST_KEY = b"IUGUARD-V01-BBS-KEYGEN"


def h2s(dst, *parts):
    h = hashlib.shake_256()
    h.update(len(dst).to_bytes(2, "big") + dst)
    for p in parts:
        h.update(len(p).to_bytes(8, "big") + p)
    return int.from_bytes(h.digest(64), "big") % curve_order


def vector(seed: bytes, L: int, messages, e: int, s: int):
    sk = h2s(DST_KEY, seed)
    pk = multiply(G2, sk)
    pk_bytes = G2_to_signature(pk)
    tagged_pk = bytes([1, 0x06]) + L.to_bytes(2, "big") + pk_bytes
    gens = [
        hash_to_G1(pk_bytes + L.to_bytes(2, "big") + i.to_bytes(2, "big"), DST_GEN, hashlib.sha256)
        for i in range(L + 1)
    ]
    B = add(G1, multiply(gens[0], s))
    for i, m in enumerate(messages):
        B = add(B, multiply(gens[i + 1], m % curve_order))
    A = multiply(B, pow(sk + e, -1, curve_order))
    return {
        "seed": seed.hex(),
        "message_count": L,
        "messages": [str(m) for m in messages],
        "e": str(e),
        "s": str(s),
        "public_key": tagged_pk.hex(),
        "generators": [G1_to_pubkey(g).hex() for g in gens],
        "A": G1_to_pubkey(A).hex(),
    }


def main():
    cases = [
        (bytes(32), 1, [7], 3, 5),
        (bytes(range(32)), 4, [11, 2**64 + 3, 3550000, 3700000], 2**200 + 1, 12345),
        (hashlib.sha256(b"vec3").digest(), 3, [0, 1, curve_order - 1], curve_order - 2, 2**250),
    ]
    print(json.dumps([vector(*c) for c in cases], indent=1))


if __name__ == "__main__":
    main()
