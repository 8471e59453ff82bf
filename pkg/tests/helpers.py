"""Adversarial provers shared by the presentation and acceptance suites."""

from iuguard.credential import F_HIGH, F_LOW
from iuguard.crypto import R, commit_public, spk_prove
from iuguard.crypto.rangeproof import _prove
from iuguard.presentation import LINK_INDICES, RANGE_BITS, Presentation, _range_context, presentation_context


def cheating_presentation(cred, pk, r, nonce, swap=False):
    """Skips the local authorization check and proves whatever the differences are."""
    ctx = presentation_context(r, nonce, pk.fingerprint)
    spk, openings = spk_prove(pk, cred.signature, cred.messages(), LINK_INDICES, ctx)
    low, high = openings[F_LOW], openings[F_HIGH]
    d1 = (r.f_low_req_khz - cred.f_low_khz) % R
    d2 = (cred.f_high_khz - r.f_high_req_khz) % R
    c_low, c_high = spk.link_commitments
    D_low = commit_public(r.f_low_req_khz) / c_low
    D_high = c_high / commit_public(r.f_high_req_khz)
    pi_low = _prove(d1, -low.blind % R, RANGE_BITS, D_low, _range_context(ctx, spk, b"low"), None)
    pi_high = _prove(d2, high.blind, RANGE_BITS, D_high, _range_context(ctx, spk, b"high"), None)
    if swap:
        c_low, c_high = c_high, c_low
    return Presentation(pk.fingerprint, spk, c_low, c_high, pi_low, pi_high, ctx)
