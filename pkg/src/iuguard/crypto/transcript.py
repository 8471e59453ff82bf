"""Fiat-Shamir transcript over SHAKE-256."""

from __future__ import annotations

import hashlib

from .group import R, g1_to_bytes, g2_to_bytes, scalar_to_bytes


class Transcript:
    """Labeled absorb/challenge accumulator.

    Every absorb is length-framed together with its label, so two histories
    collide only if they are identical. Each challenge is itself absorbed, which
    chains later challenges to earlier ones.
    """

    def __init__(self, protocol: bytes):
        self._state = hashlib.shake_256()
        self._frame(b"protocol", protocol)

    def _frame(self, label: bytes, data: bytes) -> None:
        self._state.update(len(label).to_bytes(2, "big") + label)
        self._state.update(len(data).to_bytes(8, "big") + data)

    def absorb(self, label: bytes, data: bytes) -> None:
        self._frame(label, bytes(data))

    def absorb_scalar(self, label: bytes, k: int) -> None:
        self._frame(label, scalar_to_bytes(k))

    def absorb_g1(self, label: bytes, p) -> None:
        self._frame(label, g1_to_bytes(p))

    def absorb_g2(self, label: bytes, p) -> None:
        self._frame(label, g2_to_bytes(p))

    def challenge(self, label: bytes) -> int:
        self._frame(b"challenge", label)
        out = self._state.copy().digest(64)
        c = int.from_bytes(out, "big") % R
        self._frame(b"challenge-out", out)
        return c

    def challenge_nonzero(self, label: bytes) -> int:
        c = self.challenge(label)
        # a zero challenge has probability ~2^-255; re-derive rather than special-case
        while c == 0:
            c = self.challenge(label)
        return c
