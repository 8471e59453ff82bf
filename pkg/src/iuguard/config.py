"""INI configuration with [ca], [scs], [iic] and [client] sections.

Relative paths are resolved against the directory holding the config file.
``init_deployment`` writes a complete desk deployment: PKI, issuer key,
registry, baseline accounts, per-IU enrollment material and the config.
"""

from __future__ import annotations

import configparser
import hashlib
import secrets
from dataclasses import dataclass
from pathlib import Path

from .baseline import DEFAULT_ITERATIONS, BaselineAccount, write_accounts
from .coordinator import CBRS_HIGH_KHZ, CBRS_LOW_KHZ, CHANNEL_WIDTH_KHZ
from .credential import write_registry
from .issuer import write_issuer_secret, write_issuers
from .registry_gen import synthetic_records
from .wire.pki import Identity, fingerprint_pem_file, init_pki


@dataclass
class CAConfig:
    host: str
    port: int
    identity: Identity
    registry: Path
    issuer_secret: Path
    nonce_ttl_s: float


@dataclass
class SCSConfig:
    host: str
    port: int
    identity: Identity
    issuers: Path
    records: Path | None
    band_low_khz: int
    band_high_khz: int
    channel_width_khz: int
    nonce_ttl_s: float
    max_grant_s: int
    rate_per_s: float
    rate_burst: float
    iic_client_cert: Path | None
    workers: int


@dataclass
class IICConfig:
    host: str
    port: int
    identity: Identity
    accounts: Path
    session_ttl_s: float
    client: Identity
    pool_size: int


@dataclass
class ClientConfig:
    identity: Identity
    ca_pin: str
    scs_pin: str
    iic_pin: str
    issuers: Path
    wallet: Path
    timeout_s: float


@dataclass
class Config:
    path: Path
    root_cert: Path
    ca: CAConfig
    scs: SCSConfig
    iic: IICConfig
    client: ClientConfig

    def digest(self) -> str:
        return hashlib.sha256(self.path.read_bytes()).hexdigest()[:16]


def load_config(path: str | Path) -> Config:
    p = Path(path).resolve()
    cp = configparser.ConfigParser()
    if not cp.read(p):
        raise FileNotFoundError(p)
    base = p.parent

    def path_of(section, key, optional=False):
        raw = cp.get(section, key, fallback="").strip()
        if not raw:
            if optional:
                return None
            raise ValueError(f"[{section}] {key} is required")
        q = Path(raw)
        return q if q.is_absolute() else base / q

    def ident(section, cert="cert", key="key"):
        return Identity(path_of(section, cert), path_of(section, key))

    for s in ("ca", "scs", "iic", "client"):
        if not cp.has_section(s):
            raise ValueError(f"config is missing the [{s}] section")
    ca = CAConfig(
        cp.get("ca", "host", fallback="127.0.0.1"),
        cp.getint("ca", "port"),
        ident("ca"),
        path_of("ca", "registry"),
        path_of("ca", "issuer_secret"),
        cp.getfloat("ca", "nonce_ttl_s", fallback=60.0),
    )
    scs = SCSConfig(
        cp.get("scs", "host", fallback="127.0.0.1"),
        cp.getint("scs", "port"),
        ident("scs"),
        path_of("scs", "issuers"),
        path_of("scs", "records", optional=True),
        cp.getint("scs", "band_low_khz", fallback=CBRS_LOW_KHZ),
        cp.getint("scs", "band_high_khz", fallback=CBRS_HIGH_KHZ),
        cp.getint("scs", "channel_width_khz", fallback=CHANNEL_WIDTH_KHZ),
        cp.getfloat("scs", "nonce_ttl_s", fallback=60.0),
        cp.getint("scs", "max_grant_s", fallback=86_400),
        cp.getfloat("scs", "rate_per_s", fallback=0.0),
        cp.getfloat("scs", "rate_burst", fallback=100.0),
        path_of("scs", "iic_client_cert", optional=True),
        cp.getint("scs", "workers", fallback=2),
    )
    iic = IICConfig(
        cp.get("iic", "host", fallback="127.0.0.1"),
        cp.getint("iic", "port"),
        ident("iic"),
        path_of("iic", "accounts"),
        cp.getfloat("iic", "session_ttl_s", fallback=300.0),
        ident("iic", "client_cert", "client_key"),
        cp.getint("iic", "pool_size", fallback=16),
    )
    client = ClientConfig(
        ident("client"),
        cp.get("client", "ca_pin"),
        cp.get("client", "scs_pin"),
        cp.get("client", "iic_pin"),
        path_of("client", "issuers"),
        path_of("client", "wallet"),
        cp.getfloat("client", "timeout_s", fallback=30.0),
    )
    return Config(p, path_of("DEFAULT", "root_cert"), ca, scs, iic, client)


def demo_password(seed: bytes, username: str) -> str:
    return hashlib.sha256(b"iuguard-demo-password" + seed + username.encode()).hexdigest()[:20]


def init_deployment(
    directory: str | Path,
    *,
    registry_count: int = 3,
    seed: bytes | None = None,
    ports: tuple[int, int, int] = (8441, 8442, 8443),
    iterations: int = DEFAULT_ITERATIONS,
    host: str = "127.0.0.1",
) -> Path:
    """Write a self-contained deployment under ``directory``; returns the config path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    seed = seed if seed is not None else secrets.token_bytes(16)
    ids = init_pki(d / "pki")
    kp = write_issuer_secret(d / "issuer.secret")
    write_issuers(d / "issuers.json", [kp.public])
    records = synthetic_records(registry_count, seed)
    write_registry(records, d / "registry.txt")
    (d / "state").mkdir(exist_ok=True)
    iu_dir = d / "iu"
    iu_dir.mkdir(exist_ok=True)
    accounts = []
    for rec in records:
        (iu_dir / f"{rec.iu_id}.enroll").write_text(rec.enrollment_secret.hex() + "\n")
        (iu_dir / f"{rec.iu_id}.enroll").chmod(0o600)
        pw = demo_password(seed, rec.iu_id)
        (iu_dir / f"{rec.iu_id}.password").write_text(pw + "\n")
        (iu_dir / f"{rec.iu_id}.password").chmod(0o600)
        accounts.append(BaselineAccount.create(rec.iu_id, pw, rec.iu_id, iterations))
    write_accounts(accounts, d / "accounts.txt")
    (d / "wallet").mkdir(exist_ok=True)

    cp = configparser.ConfigParser()
    cp["DEFAULT"] = {"root_cert": "pki/root.crt"}
    cp["ca"] = {
        "host": host, "port": str(ports[0]), "cert": "pki/ca.crt", "key": "pki/ca.key",
        "registry": "registry.txt", "issuer_secret": "issuer.secret", "nonce_ttl_s": "60",
    }
    cp["scs"] = {
        "host": host, "port": str(ports[1]), "cert": "pki/scs.crt", "key": "pki/scs.key",
        "issuers": "issuers.json", "records": "state/records.log",
        "band_low_khz": str(CBRS_LOW_KHZ), "band_high_khz": str(CBRS_HIGH_KHZ),
        "channel_width_khz": str(CHANNEL_WIDTH_KHZ), "nonce_ttl_s": "60", "max_grant_s": "86400",
        "rate_per_s": "0", "rate_burst": "100", "iic_client_cert": "pki/iic-client.crt", "workers": "2",
    }
    cp["iic"] = {
        "host": host, "port": str(ports[2]), "cert": "pki/iic.crt", "key": "pki/iic.key",
        "accounts": "accounts.txt", "session_ttl_s": "300",
        "client_cert": "pki/iic-client.crt", "client_key": "pki/iic-client.key", "pool_size": "16",
    }
    cp["client"] = {
        "cert": "pki/iu-client.crt", "key": "pki/iu-client.key",
        "ca_pin": ids["ca"].fingerprint, "scs_pin": ids["scs"].fingerprint, "iic_pin": ids["iic"].fingerprint,
        "issuers": "issuers.json", "wallet": "wallet", "timeout_s": "30",
    }
    path = d / "iuguard.ini"
    with path.open("w") as fh:
        fh.write("# generated by `iuguard init`; all paths are relative to this file\n")
        cp.write(fh)
    return path


def iic_fingerprints(cfg: Config) -> list[str]:
    return [fingerprint_pem_file(cfg.scs.iic_client_cert)] if cfg.scs.iic_client_cert else []
