import dataclasses
import random

import pytest

from iuguard.audit import encodings_of_int, find_leaks, group_elements, private_windows
from iuguard.credential import CredentialAuthority, encode_iu_id
from iuguard.crypto import EncodingError, R, keygen, prove_range
from iuguard.crypto.group import scalar_to_bytes
from iuguard.nonces import Nonce
from iuguard.presentation import (
    RANGE_BITS,
    AccessRequest,
    OutOfAuthorizationError,
    RejectReason,
    _range_context,
    derive_presentation,
    deserialize_presentation,
    presentation_context,
    serialize_presentation,
    verify_presentation,
)

from .conftest import SEED1, obtain_credential
from .helpers import cheating_presentation

T0 = 1_760_000_000


def req(lo=3_550_000, hi=3_560_000, lat=38_897_700, lon=-77_036_500, start=T0, dur=600):
    return AccessRequest(lo, hi, lat, lon, start, dur)


def fresh_nonce(i=0):
    return Nonce(random.Random(i).randbytes(32), T0 + 60)


@pytest.fixture(scope="module")
def honest(full_cred, ca):
    r, n = req(), fresh_nonce(1)
    return derive_presentation(full_cred, ca.public_key, r, n), r, n


# -- access request ----------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(lo=10, hi=10),
        dict(lo=11, hi=10),
        dict(dur=0),
        dict(lat=90_000_001),
        dict(lon=-180_000_001),
        dict(hi=2**32),
        dict(start=-1),
    ],
)
def test_request_invariants(kwargs):
    with pytest.raises(ValueError):
        req(**kwargs)


def test_request_payload_round_trip():
    r = req()
    assert AccessRequest.from_payload(r.to_payload()) == r
    assert r.canonical_bytes() == (
        b'{"f_high_req_khz":3560000,"f_low_req_khz":3550000,'
        b'"location":{"lat_microdeg":38897700,"lon_microdeg":-77036500},'
        b'"time_window":{"duration_s":600,"start_unix_s":1760000000}}'
    )
    with pytest.raises(ValueError):
        AccessRequest.from_payload({"f_low_req_khz": 1})
    with pytest.raises(ValueError):
        AccessRequest.from_payload({**r.to_payload(), "f_low_req_khz": True})


# -- context -------------------------------------------------------------------


def test_context_is_deterministic():
    fp = bytes(range(32))
    assert presentation_context(req(), fresh_nonce(), fp) == presentation_context(req(), fresh_nonce(), fp)


@pytest.mark.parametrize("field", ["lo", "hi", "lat", "lon", "start", "dur"])
def test_each_field_changes_context(field):
    fp = bytes(32)
    base = dict(lo=3_550_000, hi=3_560_000, lat=0, lon=0, start=T0, dur=600)
    bumped = {**base, field: base[field] + 1}
    assert presentation_context(req(**base), fresh_nonce(), fp) != presentation_context(req(**bumped), fresh_nonce(), fp)


def test_context_binds_nonce_and_issuer():
    base = presentation_context(req(), fresh_nonce(0), bytes(32))
    assert presentation_context(req(), fresh_nonce(1), bytes(32)) != base
    assert presentation_context(req(), fresh_nonce(0), bytes(31) + b"\x01") != base


def test_near_collision_sweep():
    rnd = random.Random(7)
    seen = {}
    keys = ["lo", "hi", "lat", "lon", "start", "dur"]
    for _ in range(10_000):
        lo = rnd.randrange(3_550_000, 3_690_000)
        base = dict(lo=lo, hi=lo + rnd.randrange(1, 10_000), lat=rnd.randrange(-10**6, 10**6),
                    lon=rnd.randrange(-10**6, 10**6), start=T0 + rnd.randrange(10**6), dur=rnd.randrange(1, 10**4))
        nonce = rnd.randbytes(32)
        neighbor = dict(base)
        neighbor[rnd.choice(keys)] += 1
        for params in (base, neighbor):
            d = presentation_context(req(**params), nonce, bytes(32))
            key = (tuple(sorted(params.items())), nonce)
            assert seen.setdefault(d, key) == key
    assert len(seen) >= 19_990


# -- completeness ------------------------------------------------------------


def test_paper_band_example(honest, ca):
    pres, r, n = honest
    assert verify_presentation(ca.public_key, pres, r, n)


def test_request_equal_to_authorized_band(full_cred, ca):
    r, n = req(3_550_000, 3_700_000), fresh_nonce(2)
    pres = derive_presentation(full_cred, ca.public_key, r, n)
    assert verify_presentation(ca.public_key, pres, r, n)


def test_sub_band_credential(ca):
    cred = obtain_credential(ca, "radar-02")
    r, n = req(cred.f_low_khz + 1, cred.f_high_khz - 1), fresh_nonce(3)
    assert verify_presentation({ca.public_key.fingerprint: ca.public_key}, derive_presentation(cred, ca.public_key, r, n), r, n)


@pytest.mark.parametrize(
    "lo,hi",
    [(3_540_000, 3_560_000), (3_549_999, 3_560_000), (3_690_000, 3_700_001), (3_400_000, 3_800_000)],
)
def test_out_of_authorization_is_local(full_cred, ca, lo, hi):
    with pytest.raises(OutOfAuthorizationError) as exc:
        derive_presentation(full_cred, ca.public_key, req(lo, hi), fresh_nonce())
    assert exc.value.code == "OUT_OF_AUTHORIZATION"


def test_derive_refuses_other_issuer_key(full_cred):
    with pytest.raises(ValueError):
        derive_presentation(full_cred, keygen(SEED1, 4).public, req(), fresh_nonce())


# -- soundness -------------------------------------------------------------------


def test_cheating_helper_is_honest_when_authorized(full_cred, ca):
    r, n = req(), fresh_nonce()
    assert verify_presentation(ca.public_key, cheating_presentation(full_cred, ca.public_key, r, n), r, n)


def test_negative_gap_low(full_cred, ca):
    # f_low_req sits 10000 kHz below the authorized edge, so d1 encodes as r - 10000
    r, n = req(3_540_000, 3_560_000), fresh_nonce()
    assert (r.f_low_req_khz - full_cred.f_low_khz) % R == R - 10_000
    v = verify_presentation(ca.public_key, cheating_presentation(full_cred, ca.public_key, r, n), r, n)
    assert v.reason is RejectReason.RANGE_LOW_INVALID


def test_negative_gap_high(full_cred, ca):
    r, n = req(3_650_000, 3_700_001), fresh_nonce()
    v = verify_presentation(ca.public_key, cheating_presentation(full_cred, ca.public_key, r, n), r, n)
    assert v.reason is RejectReason.RANGE_HIGH_INVALID


def test_commitment_swap(full_cred, ca):
    r, n = req(), fresh_nonce()
    pres = cheating_presentation(full_cred, ca.public_key, r, n, swap=True)
    assert verify_presentation(ca.public_key, pres, r, n).reason is RejectReason.SIGNATURE_PROOF_INVALID


def test_foreign_issuer(ca, registry3):
    rogue = CredentialAuthority(registry3, keygen(SEED1, 4))
    cred = obtain_credential(rogue, "radar-01")
    r, n = req(), fresh_nonce()
    pres = derive_presentation(cred, rogue.public_key, r, n)
    assert verify_presentation(ca.public_key, pres, r, n).reason is RejectReason.SIGNATURE_PROOF_INVALID
    # claiming the trusted fingerprint does not help
    ctx = presentation_context(r, n, ca.public_key.fingerprint)
    spoofed = dataclasses.replace(pres, issuer_fp=ca.public_key.fingerprint, context_digest=ctx)
    assert verify_presentation(ca.public_key, spoofed, r, n).reason is RejectReason.SIGNATURE_PROOF_INVALID


def test_replay_under_fresh_nonce(honest, ca):
    pres, r, _ = honest
    assert verify_presentation(ca.public_key, pres, r, fresh_nonce(99)).reason is RejectReason.CONTEXT_MISMATCH


def test_replay_for_different_request(honest, ca):
    pres, _, n = honest
    assert verify_presentation(ca.public_key, pres, req(dur=601), n).reason is RejectReason.CONTEXT_MISMATCH


def test_reused_spk_with_new_range_proofs(honest, full_cred, ca):
    old, r, _ = honest
    n2 = fresh_nonce(5)
    ctx2 = presentation_context(r, n2, ca.public_key.fingerprint)
    d1 = r.f_low_req_khz - full_cred.f_low_khz
    d2 = full_cred.f_high_khz - r.f_high_req_khz
    # the holder knows d1, d2 but not the blinds baked into the old proof; prove over fresh ones
    _, pi_low = prove_range(d1, 5, RANGE_BITS, _range_context(ctx2, old.spk, b"low"))
    _, pi_high = prove_range(d2, 6, RANGE_BITS, _range_context(ctx2, old.spk, b"high"))
    forged = dataclasses.replace(old, range_low=pi_low, range_high=pi_high, context_digest=ctx2)
    assert verify_presentation(ca.public_key, forged, r, n2).reason is RejectReason.SIGNATURE_PROOF_INVALID


def test_range_proofs_swapped(honest, ca):
    pres, r, n = honest
    swapped = dataclasses.replace(pres, range_low=pres.range_high, range_high=pres.range_low)
    assert verify_presentation(ca.public_key, swapped, r, n).reason is RejectReason.RANGE_LOW_INVALID


def test_sparse_mutation_sweep(honest, ca):
    pres, r, n = honest
    data = pres.serialize()
    for i in range(0, len(data), 41):
        mutant = bytearray(data)
        mutant[i] ^= 0x80
        try:
            parsed = deserialize_presentation(bytes(mutant))
        except EncodingError:
            continue
        assert not verify_presentation(ca.public_key, parsed, r, n), f"mutant at byte {i} accepted"


# -- encoding --------------------------------------------------------------------


def test_serialization_round_trip(honest):
    pres = honest[0]
    data = serialize_presentation(pres)
    again = deserialize_presentation(data)
    assert serialize_presentation(again) == data
    assert again.context_digest == pres.context_digest
    assert len(data) <= 50 * 1024


def test_truncation_and_trailing_bytes(honest):
    data = serialize_presentation(honest[0])
    for cut in (1, 33, len(data) // 2):
        with pytest.raises(EncodingError):
            deserialize_presentation(data[:-cut])
    with pytest.raises(EncodingError):
        deserialize_presentation(data + b"\x00")


def test_version_tag_checked(honest):
    data = bytearray(serialize_presentation(honest[0]))
    data[0] ^= 0x02
    with pytest.raises(EncodingError):
        deserialize_presentation(bytes(data))


# -- privacy ---------------------------------------------------------------------


def test_presentation_reveals_no_attribute(full_cred, ca):
    r = req()
    blobs = [serialize_presentation(derive_presentation(full_cred, ca.public_key, r, fresh_nonce(i))) for i in range(3)]
    needles = [full_cred.iu_id.encode(), scalar_to_bytes(encode_iu_id(full_cred.iu_id)), scalar_to_bytes(full_cred.link_secret)]
    needles += encodings_of_int(full_cred.f_low_khz) + encodings_of_int(full_cred.f_high_khz)
    assert find_leaks(blobs, needles) == []


def test_two_presentations_share_nothing_random(full_cred, ca):
    r = req()
    a = derive_presentation(full_cred, ca.public_key, r, fresh_nonce(10))
    b = derive_presentation(full_cred, ca.public_key, r, fresh_nonce(10))
    assert not set(group_elements(a)) & set(group_elements(b))
    assert not private_windows(a.serialize()) & private_windows(b.serialize())
    # same request and nonce: only the public parts coincide
    assert a.context_digest == b.context_digest
