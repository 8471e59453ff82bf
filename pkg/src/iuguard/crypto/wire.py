"""Binary framing shared by every serialized object.

Each top-level object starts with a 2-byte format tag: byte 0 is the format
version, byte 1 identifies the object type.
"""

from __future__ import annotations

import struct

from .group import (
    G1_BYTES,
    G2_BYTES,
    SCALAR_BYTES,
    EncodingError,
    g1_from_bytes,
    g1_to_bytes,
    g2_from_bytes,
    g2_to_bytes,
    scalar_from_bytes,
    scalar_to_bytes,
)

FORMAT_VERSION = 1

TAG_SIGNATURE = bytes([FORMAT_VERSION, 0x01])
TAG_COMMITMENT = bytes([FORMAT_VERSION, 0x02])
TAG_RANGE_PROOF = bytes([FORMAT_VERSION, 0x03])
TAG_SPK = bytes([FORMAT_VERSION, 0x04])
TAG_BLIND_POK = bytes([FORMAT_VERSION, 0x05])
TAG_PUBLIC_KEY = bytes([FORMAT_VERSION, 0x06])
TAG_CREDENTIAL = bytes([FORMAT_VERSION, 0x10])
TAG_CRED_REQUEST = bytes([FORMAT_VERSION, 0x11])
TAG_ISSUANCE = bytes([FORMAT_VERSION, 0x12])
TAG_PRESENTATION = bytes([FORMAT_VERSION, 0x20])


def check_tag(data: bytes, tag: bytes) -> bytes:
    if len(data) < 2:
        raise EncodingError("truncated: missing format tag")
    if data[0] != tag[0]:
        raise EncodingError(f"unsupported format version {data[0]}")
    if data[1] != tag[1]:
        raise EncodingError(f"unexpected object type 0x{data[1]:02x}")
    return data[2:]


class Writer:
    def __init__(self, tag: bytes | None = None):
        self._parts: list[bytes] = [tag] if tag else []

    def raw(self, b: bytes) -> "Writer":
        self._parts.append(bytes(b))
        return self

    def u8(self, v: int) -> "Writer":
        return self.raw(struct.pack(">B", v))

    def u16(self, v: int) -> "Writer":
        return self.raw(struct.pack(">H", v))

    def u32(self, v: int) -> "Writer":
        return self.raw(struct.pack(">I", v))

    def u64(self, v: int) -> "Writer":
        return self.raw(struct.pack(">Q", v))

    def i32(self, v: int) -> "Writer":
        return self.raw(struct.pack(">i", v))

    def scalar(self, k: int) -> "Writer":
        return self.raw(scalar_to_bytes(k))

    def g1(self, p) -> "Writer":
        return self.raw(g1_to_bytes(p))

    def g2(self, p) -> "Writer":
        return self.raw(g2_to_bytes(p))

    def blob(self, b: bytes) -> "Writer":
        return self.u32(len(b)).raw(b)

    def text(self, s: str) -> "Writer":
        return self.blob(s.encode("utf-8"))

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes, tag: bytes | None = None):
        self._data = check_tag(data, tag) if tag else bytes(data)
        self._pos = 0

    def raw(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise EncodingError("truncated input")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self.raw(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.raw(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.raw(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.raw(8))[0]

    def i32(self) -> int:
        return struct.unpack(">i", self.raw(4))[0]

    def scalar(self) -> int:
        return scalar_from_bytes(self.raw(SCALAR_BYTES))

    def g1(self):
        return g1_from_bytes(self.raw(G1_BYTES))

    def g2(self):
        return g2_from_bytes(self.raw(G2_BYTES))

    def blob(self, limit: int = 1 << 20) -> bytes:
        n = self.u32()
        if n > limit:
            raise EncodingError("blob too large")
        return self.raw(n)

    def text(self) -> str:
        try:
            return self.blob(4096).decode("utf-8")
        except UnicodeDecodeError:
            raise EncodingError("invalid utf-8") from None

    def done(self) -> None:
        if self._pos != len(self._data):
            raise EncodingError(f"{len(self._data) - self._pos} trailing bytes")
