"""Desk-scale PKI: one local root, leaf certificates per role, pinned fingerprints.

Every connection is TLS 1.3 with certificates required on both sides. Chains
must lead to the local root, and on top of that clients compare the server
leaf's SHA-256 fingerprint against a configured pin, while servers read the
client leaf fingerprint to decide which routes a peer may use.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import ssl
from dataclasses import dataclass
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.x509.oid import ExtendedKeyUsageOID, NameOID

ROLES_SERVER = ("ca", "scs", "iic")
ROLES_CLIENT = ("iu-client", "iic-client")


class PinMismatch(ssl.SSLError):
    """The peer presented a valid chain but not the pinned certificate."""


def fingerprint_der(der: bytes) -> str:
    return hashlib.sha256(der).hexdigest()


def fingerprint_pem_file(path: str | Path) -> str:
    cert = x509.load_pem_x509_certificate(Path(path).read_bytes())
    return fingerprint_der(cert.public_bytes(serialization.Encoding.DER))


def _name(cn: str) -> x509.Name:
    return x509.Name([x509.NameAttribute(NameOID.ORGANIZATION_NAME, "iuguard desk pki"), x509.NameAttribute(NameOID.COMMON_NAME, cn)])


def _write_key(key, path: Path) -> None:
    path.write_bytes(
        key.private_bytes(serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8, serialization.NoEncryption())
    )
    path.chmod(0o600)


@dataclass(frozen=True)
class Identity:
    cert: Path
    key: Path

    @property
    def fingerprint(self) -> str:
        return fingerprint_pem_file(self.cert)


def init_pki(directory: str | Path, days: int = 365) -> dict[str, Identity]:
    """Create ``root.crt`` plus a cert/key pair per role. Returns role -> Identity."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    now = dt.datetime.now(dt.timezone.utc) - dt.timedelta(minutes=5)
    root_key = ec.generate_private_key(ec.SECP256R1())
    root = (
        x509.CertificateBuilder()
        .subject_name(_name("iuguard root"))
        .issuer_name(_name("iuguard root"))
        .public_key(root_key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now)
        .not_valid_after(now + dt.timedelta(days=days))
        .add_extension(x509.BasicConstraints(ca=True, path_length=0), critical=True)
        .add_extension(
            x509.KeyUsage(False, False, False, False, False, True, True, False, False), critical=True
        )
        .sign(root_key, hashes.SHA256())
    )
    (d / "root.crt").write_bytes(root.public_bytes(serialization.Encoding.PEM))
    out = {}
    for role in ROLES_SERVER + ROLES_CLIENT:
        key = ec.generate_private_key(ec.SECP256R1())
        eku = ExtendedKeyUsageOID.SERVER_AUTH if role in ROLES_SERVER else ExtendedKeyUsageOID.CLIENT_AUTH
        builder = (
            x509.CertificateBuilder()
            .subject_name(_name(role))
            .issuer_name(root.subject)
            .public_key(key.public_key())
            .serial_number(x509.random_serial_number())
            .not_valid_before(now)
            .not_valid_after(now + dt.timedelta(days=days))
            .add_extension(x509.BasicConstraints(ca=False, path_length=None), critical=True)
            .add_extension(x509.ExtendedKeyUsage([eku]), critical=False)
        )
        if role in ROLES_SERVER:
            builder = builder.add_extension(
                x509.SubjectAlternativeName([x509.DNSName("localhost"), x509.DNSName(role)]), critical=False
            )
        cert = builder.sign(root_key, hashes.SHA256())
        ident = Identity(d / f"{role}.crt", d / f"{role}.key")
        ident.cert.write_bytes(cert.public_bytes(serialization.Encoding.PEM))
        _write_key(key, ident.key)
        out[role] = ident
    return out


def server_context(identity: Identity, root: str | Path) -> ssl.SSLContext:
    ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
    ctx.minimum_version = ssl.TLSVersion.TLSv1_3
    ctx.load_cert_chain(identity.cert, identity.key)
    ctx.load_verify_locations(cafile=str(root))
    ctx.verify_mode = ssl.CERT_REQUIRED
    return ctx


def client_context(identity: Identity, root: str | Path) -> ssl.SSLContext:
    ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
    ctx.minimum_version = ssl.TLSVersion.TLSv1_3
    # names are not checked; the leaf pin is stronger
    ctx.check_hostname = False
    ctx.verify_mode = ssl.CERT_REQUIRED
    ctx.load_verify_locations(cafile=str(root))
    ctx.load_cert_chain(identity.cert, identity.key)
    return ctx


def check_pin(ssl_object, pin: str) -> None:
    der = ssl_object.getpeercert(binary_form=True)
    got = fingerprint_der(der) if der else ""
    if got != pin.lower():
        raise PinMismatch(f"peer certificate {got[:16]}... does not match pin {pin[:16]}...")


def peer_fingerprint(ssl_object) -> str | None:
    der = ssl_object.getpeercert(binary_form=True) if ssl_object is not None else None
    return fingerprint_der(der) if der else None
