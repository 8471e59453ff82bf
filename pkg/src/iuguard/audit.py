"""Byte-level audits for unlinkability and data-at-rest hygiene."""

from __future__ import annotations

from typing import Iterable

from .crypto.group import g1_to_bytes, scalar_to_bytes
from .presentation import Presentation, public_regions


def private_mask(data: bytes) -> list[bool]:
    mask = [True] * len(data)
    for lo, hi in public_regions(data):
        for i in range(lo, hi):
            mask[i] = False
    return mask


def private_windows(data: bytes, k: int = 8) -> set[bytes]:
    """All length-``k`` windows lying entirely inside randomized regions."""
    mask = private_mask(data)
    out, run = set(), 0
    for i, private in enumerate(mask):
        run = run + 1 if private else 0
        if run >= k:
            out.add(data[i - k + 1 : i + 1])
    return out


def group_elements(pres: Presentation) -> list[bytes]:
    spk = pres.spk
    elems = [spk.A_prime, spk.A_bar, spk.d, pres.C_low.C, pres.C_high.C]
    for rp in (pres.range_low, pres.range_high):
        elems += [rp.A, rp.S, rp.T1, rp.T2, *rp.L, *rp.R]
    return [g1_to_bytes(p) for p in elems]


def encodings_of_int(v: int) -> list[bytes]:
    """The ways an integer attribute could plausibly leak into a byte store."""
    out = [str(v).encode()]
    if 0 <= v < 2**32:
        out.append(v.to_bytes(4, "big"))
        out.append(v.to_bytes(4, "little"))
    if 0 <= v < 2**64:
        out.append(v.to_bytes(8, "big"))
    out.append(scalar_to_bytes(v))
    return out


def find_leaks(haystacks: Iterable[bytes], needles: Iterable[bytes]) -> list[tuple[int, bytes]]:
    """(haystack index, needle) for every needle found as a substring."""
    needles = [n for n in needles if n]
    hits = []
    for i, hay in enumerate(haystacks):
        for n in needles:
            if n in hay:
                hits.append((i, n))
    return hits
