import dataclasses
import logging
import stat

import pytest

from iuguard.credential import (
    SCHEMA,
    AuthenticationError,
    Credential,
    CredentialAuthority,
    CredentialRequest,
    HolderStateMismatch,
    IssuanceIntegrityError,
    IssuanceResponse,
    NotRegisteredError,
    RegistryError,
    create_credential_request,
    encode_iu_id,
    finalize_credential,
    load_registry,
    write_registry,
)
from iuguard.crypto import EncodingError, keygen, verify_blind_commitment, verify_signature
from iuguard.crypto.group import scalar_to_bytes
from iuguard.nonces import NonceError
from iuguard.registry_gen import synthetic_records

from .conftest import REGISTRY3, SEED1, obtain_credential


def test_schema_is_frozen():
    assert SCHEMA.attributes == ("link_secret", "iu_id", "f_low_khz", "f_high_khz")
    assert SCHEMA.message_count == 4


# -- registry ----------------------------------------------------------------


def test_three_record_fixture(registry3):
    assert len(registry3) == 3
    assert registry3["radar-01"].authorized_f_low_khz == 3_550_000
    assert registry3["radar-01"].authorized_f_high_khz == 3_700_000


def test_zero_width_band_rejected_with_line_number(tmp_path):
    lines = REGISTRY3.read_text().splitlines()
    lines[2] = lines[2].replace('"authorized_f_low_khz": 3626508', '"authorized_f_low_khz": 3672871')
    bad = tmp_path / "bad.txt"
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(RegistryError, match="line 3.*radar-02"):
        load_registry(bad)


@pytest.mark.parametrize("header", ["iuguard-registry v2", "", '{"iu_id": "x"}'])
def test_unknown_header_rejected(tmp_path, header):
    body = REGISTRY3.read_text().splitlines()[1:]
    p = tmp_path / "r.txt"
    p.write_text("\n".join([header] + body) + "\n")
    with pytest.raises(RegistryError, match="header"):
        load_registry(p)


def test_duplicate_iu_id_rejected(tmp_path):
    recs = synthetic_records(3, b"dup")
    p = tmp_path / "r.txt"
    write_registry(recs + [recs[1]], p)
    with pytest.raises(RegistryError, match="duplicate"):
        load_registry(p)


def test_malformed_line_rejected(tmp_path):
    p = tmp_path / "r.txt"
    p.write_text(REGISTRY3.read_text() + "{not json\n")
    with pytest.raises(RegistryError, match="line 5"):
        load_registry(p)


def test_ten_thousand_record_registry(tmp_path):
    recs = synthetic_records(10_000, b"bulk")
    p = tmp_path / "big.txt"
    write_registry(recs, p)
    reg = load_registry(p)
    assert len(reg) == 10_000
    for rec in recs[::997]:
        assert reg[rec.iu_id] == rec
    assert all(r.authorized_f_low_khz < r.authorized_f_high_khz for r in reg.values())


def test_record_json_round_trip(registry3):
    for rec in registry3.values():
        assert type(rec).from_json(rec.to_json()) == rec


# -- issuance ----------------------------------------------------------------


def test_full_band_credential(full_cred, ca):
    assert (full_cred.f_low_khz, full_cred.f_high_khz) == (3_550_000, 3_700_000)
    assert full_cred.verify(ca.public_key)
    assert full_cred.issuer_fp == ca.public_key.fingerprint


def test_every_registered_iu_can_obtain_a_credential(ca, registry3):
    for iu_id, rec in registry3.items():
        cred = obtain_credential(ca, iu_id)
        assert cred.verify(ca.public_key)
        assert (cred.f_low_khz, cred.f_high_khz) == (rec.authorized_f_low_khz, rec.authorized_f_high_khz)


def test_request_pok_checks_out_at_ca(ca):
    rec = ca.registry["radar-02"]
    nonce = ca.new_nonce()
    req, _ = create_credential_request("radar-02", rec.enrollment_secret, nonce, ca.public_key)
    ctx = b"iuguard-issuance-v1" + nonce + b"radar-02"
    assert verify_blind_commitment(ca.public_key, req.commitment, req.pok, ctx)
    assert CredentialRequest.deserialize(req.serialize()) == req


def test_two_requests_use_fresh_secrets(ca):
    rec = ca.registry["radar-01"]
    r1, s1 = create_credential_request("radar-01", rec.enrollment_secret, ca.new_nonce(), ca.public_key)
    r2, s2 = create_credential_request("radar-01", rec.enrollment_secret, ca.new_nonce(), ca.public_key)
    assert r1.commitment != r2.commitment
    assert s1.link_secret != s2.link_secret


def test_consumed_nonce_cannot_be_reused(ca):
    rec = ca.registry["radar-01"]
    nonce = ca.new_nonce()
    req, _ = create_credential_request("radar-01", rec.enrollment_secret, nonce, ca.public_key)
    ca.issue(req)
    req2, _ = create_credential_request("radar-01", rec.enrollment_secret, nonce, ca.public_key)
    with pytest.raises(NonceError) as exc:
        ca.issue(req2)
    assert exc.value.code == "NONCE_REUSED"


def test_nonce_never_issued(ca):
    rec = ca.registry["radar-01"]
    req, _ = create_credential_request("radar-01", rec.enrollment_secret, b"\x07" * 32, ca.public_key)
    with pytest.raises(NonceError) as exc:
        ca.issue(req)
    assert exc.value.code == "NONCE_UNKNOWN"


def test_expired_ca_nonce(registry3):
    now = [1000.0]
    ca = CredentialAuthority(registry3, keygen(bytes(32), 4), nonce_ttl_s=60, clock=lambda: now[0])
    rec = registry3["radar-01"]
    req, _ = create_credential_request("radar-01", rec.enrollment_secret, ca.new_nonce(), ca.public_key)
    now[0] += 61
    with pytest.raises(NonceError) as exc:
        ca.issue(req)
    assert exc.value.code == "NONCE_EXPIRED"


def test_unknown_iu_not_registered(ca):
    req, _ = create_credential_request("radar-99", bytes(32), ca.new_nonce(), ca.public_key)
    with pytest.raises(NotRegisteredError) as exc:
        ca.issue(req)
    assert exc.value.code == "NOT_REGISTERED"


def test_bad_enrollment_secret(ca):
    req, _ = create_credential_request("radar-01", b"\x00" * 32, ca.new_nonce(), ca.public_key)
    with pytest.raises(AuthenticationError) as exc:
        ca.issue(req)
    assert exc.value.code == "AUTH_FAILED"


def test_mac_is_bound_to_identity(ca):
    # radar-02's secret presented under radar-01's name
    secret = ca.registry["radar-02"].enrollment_secret
    req, _ = create_credential_request("radar-01", secret, ca.new_nonce(), ca.public_key)
    with pytest.raises(AuthenticationError):
        ca.issue(req)


def test_claimed_band_is_ignored(ca):
    cred = obtain_credential(ca, "radar-02", claimed_band=(3_550_000, 3_700_000))
    rec = ca.registry["radar-02"]
    assert (cred.f_low_khz, cred.f_high_khz) == (rec.authorized_f_low_khz, rec.authorized_f_high_khz)
    assert not verify_signature(
        ca.public_key,
        [cred.link_secret, encode_iu_id("radar-02"), 3_550_000, 3_700_000],
        cred.signature,
    )


# -- finalization --------------------------------------------------------------


def _issued(ca, iu_id="radar-01"):
    rec = ca.registry[iu_id]
    req, state = create_credential_request(iu_id, rec.enrollment_secret, ca.new_nonce(), ca.public_key)
    return ca.issue(req), state


def test_tampered_band_is_an_integrity_error(ca):
    resp, state = _issued(ca)
    forged = dataclasses.replace(resp, f_high_khz=resp.f_high_khz + 1)
    with pytest.raises(IssuanceIntegrityError) as exc:
        finalize_credential(forged, state, ca.public_key)
    assert exc.value.code == "ISSUANCE_INTEGRITY"


def test_every_single_byte_tamper_is_caught(ca):
    resp, state = _issued(ca)
    data = resp.serialize()
    for i in range(len(data)):
        mutant = bytearray(data)
        mutant[i] ^= 0x01
        try:
            parsed = IssuanceResponse.deserialize(bytes(mutant))
        except EncodingError:
            continue
        with pytest.raises((IssuanceIntegrityError, HolderStateMismatch)):
            finalize_credential(parsed, state, ca.public_key)


def test_mismatched_holder_state(ca):
    resp1, _ = _issued(ca)
    _, state2 = _issued(ca)
    with pytest.raises(HolderStateMismatch):
        finalize_credential(resp1, state2, ca.public_key)


def test_wrong_issuer_key(ca):
    resp, state = _issued(ca)
    with pytest.raises(IssuanceIntegrityError):
        finalize_credential(resp, state, keygen(SEED1, 4).public)


def test_credential_round_trip_and_file_mode(full_cred, tmp_path):
    data = full_cred.serialize()
    assert Credential.deserialize(data) == full_cred
    p = tmp_path / "vc.bin"
    full_cred.save(p)
    assert stat.S_IMODE(p.stat().st_mode) == 0o600
    assert Credential.load(p) == full_cred
    with pytest.raises(EncodingError):
        Credential.deserialize(data[:-1])


def test_link_secret_never_reaches_the_ca(registry3, caplog):
    caplog.set_level(logging.DEBUG)
    ca = CredentialAuthority(registry3, keygen(bytes(32), 4))
    rec = registry3["radar-01"]
    req, state = create_credential_request("radar-01", rec.enrollment_secret, ca.new_nonce(), ca.public_key)
    resp = ca.issue(req)
    cred = finalize_credential(resp, state, ca.public_key)
    secret = scalar_to_bytes(state.link_secret)
    assert secret in cred.serialize()
    ca_side = [req.serialize(), resp.serialize(), caplog.text.encode()]
    ca_side += [repr(vars(ca.nonces)).encode(), repr(registry3["radar-01"]).encode()]
    for blob in ca_side:
        assert secret not in blob
        assert secret.hex().encode() not in blob
        assert str(state.link_secret).encode() not in blob
    assert "link_secret" not in repr(state)
