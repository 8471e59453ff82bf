"""Account-password authentication for the plaintext IIC baseline."""

from __future__ import annotations

import hashlib
import hmac
import json
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

ACCOUNTS_HEADER = "iuguard-accounts v1"
DEFAULT_ITERATIONS = 10_000


class LoginFailed(PermissionError):
    code = "LOGIN_FAILED"


class SessionExpired(PermissionError):
    code = "SESSION_EXPIRED"


@dataclass(frozen=True)
class BaselineAccount:
    username: str
    salt: bytes
    iterations: int
    password_hash: bytes = field(repr=False)
    iu_ref: str

    @classmethod
    def create(cls, username: str, password: str, iu_ref: str, iterations: int = DEFAULT_ITERATIONS) -> "BaselineAccount":
        salt = secrets.token_bytes(16)
        return cls(username, salt, iterations, _hash(password, salt, iterations), iu_ref)

    def check(self, password: str) -> bool:
        return hmac.compare_digest(_hash(password, self.salt, self.iterations), self.password_hash)

    def to_json(self) -> dict:
        return {
            "username": self.username,
            "salt": self.salt.hex(),
            "iterations": self.iterations,
            "password_hash": self.password_hash.hex(),
            "iu_ref": self.iu_ref,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BaselineAccount":
        return cls(obj["username"], bytes.fromhex(obj["salt"]), int(obj["iterations"]), bytes.fromhex(obj["password_hash"]), obj["iu_ref"])


def _hash(password: str, salt: bytes, iterations: int) -> bytes:
    return hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)


def write_accounts(accounts: Iterable[BaselineAccount], path: str | Path) -> None:
    lines = [ACCOUNTS_HEADER] + [json.dumps(a.to_json(), sort_keys=True) for a in accounts]
    p = Path(path)
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    p.chmod(0o600)


def load_accounts(path: str | Path) -> dict[str, BaselineAccount]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != ACCOUNTS_HEADER:
        raise ValueError(f"{path}: expected header {ACCOUNTS_HEADER!r}")
    out = {}
    for ln in lines[1:]:
        if ln.strip():
            acct = BaselineAccount.from_json(json.loads(ln))
            if acct.username in out:
                raise ValueError(f"duplicate account {acct.username!r}")
            out[acct.username] = acct
    return out


class AccountStore:
    """Accounts plus live sessions. Session tokens are kept only as SHA-256 digests."""

    def __init__(self, accounts: dict[str, BaselineAccount], session_ttl_s: float = 300.0, clock: Callable[[], float] = time.time):
        self.accounts = accounts
        self.session_ttl_s = session_ttl_s
        self._clock = clock
        self._sessions: dict[bytes, tuple[str, float]] = {}
        self._lock = threading.Lock()
        self._purge_at = 4096
        # equalizes timing for unknown usernames
        self._decoy = BaselineAccount.create("", secrets.token_hex(8), "", DEFAULT_ITERATIONS)

    def login(self, username: str, password: str) -> tuple[bytes, float]:
        acct = self.accounts.get(username)
        ok = (acct or self._decoy).check(password) and acct is not None
        if not ok:
            raise LoginFailed("bad username or password")
        token = secrets.token_bytes(32)
        expires = self._clock() + self.session_ttl_s
        with self._lock:
            self._sessions[hashlib.sha256(token).digest()] = (username, expires)
            if len(self._sessions) > self._purge_at:
                now = self._clock()
                self._sessions = {k: v for k, v in self._sessions.items() if v[1] > now}
                self._purge_at = max(4096, 2 * len(self._sessions))
        return token, expires

    def check_session(self, token: bytes) -> BaselineAccount:
        with self._lock:
            entry = self._sessions.get(hashlib.sha256(token).digest())
        if entry is None or entry[1] <= self._clock():
            raise SessionExpired("session unknown or expired")
        return self.accounts[entry[0]]
