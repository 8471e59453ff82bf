"""Issuer key files.

The CA keeps a 32-byte seed; everyone else loads a public issuer list that
stands in for a schema/key registry.
"""

from __future__ import annotations

import json
import secrets
from pathlib import Path

from . import canonical
from .credential import SCHEMA
from .crypto import PublicKey, SignerKeyPair, keygen

SECRET_HEADER = "iuguard-issuer-secret v1"
ISSUERS_FORMAT = "iuguard-issuers v1"


def write_issuer_secret(path: str | Path, seed: bytes | None = None) -> SignerKeyPair:
    seed = seed if seed is not None else secrets.token_bytes(32)
    if len(seed) != 32:
        raise ValueError("issuer seed must be 32 bytes")
    p = Path(path)
    p.write_text(f"{SECRET_HEADER}\n{seed.hex()}\n", encoding="ascii")
    p.chmod(0o600)
    return keygen(seed, SCHEMA.message_count)


def load_issuer_secret(path: str | Path) -> SignerKeyPair:
    lines = Path(path).read_text(encoding="ascii").split()
    if len(lines) != 3 or " ".join(lines[:2]) != SECRET_HEADER:
        raise ValueError(f"{path}: not an issuer secret file")
    return keygen(bytes.fromhex(lines[2]), SCHEMA.message_count)


def write_issuers(path: str | Path, keys: list[PublicKey]) -> None:
    doc = {
        "format": ISSUERS_FORMAT,
        "issuers": [
            {
                "fingerprint": pk.fingerprint.hex(),
                "public_key": canonical.b64e(pk.serialize()),
                "schema": {"version": SCHEMA.version, "attributes": list(SCHEMA.attributes)},
            }
            for pk in keys
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_issuers(path: str | Path) -> dict[bytes, PublicKey]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != ISSUERS_FORMAT:
        raise ValueError(f"{path}: expected format {ISSUERS_FORMAT!r}")
    out = {}
    for entry in doc["issuers"]:
        schema = entry["schema"]
        if schema["version"] != SCHEMA.version or tuple(schema["attributes"]) != SCHEMA.attributes:
            raise ValueError(f"{path}: issuer {entry['fingerprint'][:16]} uses an unknown schema")
        pk = PublicKey.deserialize(canonical.b64d(entry["public_key"]))
        if pk.fingerprint.hex() != entry["fingerprint"]:
            raise ValueError(f"{path}: fingerprint does not match key")
        out[pk.fingerprint] = pk
    return out
