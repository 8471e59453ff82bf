"""One-time challenge nonces with expiry."""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass
from typing import Callable

NONCE_BYTES = 32


class NonceError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


NONCE_UNKNOWN = "NONCE_UNKNOWN"
NONCE_EXPIRED = "NONCE_EXPIRED"
NONCE_REUSED = "NONCE_REUSED"


@dataclass(frozen=True)
class Nonce:
    value: bytes
    expires_at: float


class NonceStore:
    """Issues random nonces and consumes each at most once.

    ``consume`` is an atomic check-and-delete. Consumed values are remembered
    until their expiry passes so reuse can be told apart from forgery.
    """

    def __init__(self, ttl_s: float = 60.0, clock: Callable[[], float] = time.time):
        self.ttl_s = ttl_s
        self._clock = clock
        self._lock = threading.Lock()
        self._live: dict[bytes, float] = {}
        self._spent: dict[bytes, float] = {}
        self._purge_at = 4096

    def issue(self) -> Nonce:
        now = self._clock()
        with self._lock:
            while True:
                value = secrets.token_bytes(NONCE_BYTES)
                if value not in self._live and value not in self._spent:
                    break
            expires = now + self.ttl_s
            self._live[value] = expires
            if len(self._live) + len(self._spent) > self._purge_at:
                self._purge(now)
                # amortized: the next sweep waits until the store doubles
                self._purge_at = max(4096, 2 * (len(self._live) + len(self._spent)))
        return Nonce(value, expires)

    def peek(self, value: bytes) -> Nonce | None:
        with self._lock:
            exp = self._live.get(value)
        return None if exp is None else Nonce(value, exp)

    def consume(self, value: bytes) -> Nonce:
        now = self._clock()
        with self._lock:
            if value in self._spent:
                raise NonceError(NONCE_REUSED, "nonce already used")
            exp = self._live.pop(value, None)
            if exp is None:
                raise NonceError(NONCE_UNKNOWN, "nonce was never issued")
            self._spent[value] = exp
        if now > exp:
            raise NonceError(NONCE_EXPIRED, "nonce expired")
        return Nonce(value, exp)

    def _purge(self, now: float) -> None:
        # expired live nonces are dropped; spent ones once they can no longer be confused
        self._live = {v: e for v, e in self._live.items() if e >= now - self.ttl_s}
        self._spent = {v: e for v, e in self._spent.items() if e >= now - self.ttl_s}

    def __len__(self) -> int:
        with self._lock:
            return len(self._live)
