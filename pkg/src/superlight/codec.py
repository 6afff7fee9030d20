"""Canonical binary encoding primitives.

Fixed-width integers are little-endian. Lengths are unsigned LEB128 varints
and must use the minimal number of bytes.
"""

from __future__ import annotations

from .crypto import DecodeError


class Writer:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def raw(self, data: bytes) -> "Writer":
        self._parts.append(bytes(data))
        return self

    def u8(self, v: int) -> "Writer":
        return self.raw(v.to_bytes(1, "little"))

    def u32(self, v: int) -> "Writer":
        return self.raw(v.to_bytes(4, "little"))

    def u64(self, v: int) -> "Writer":
        return self.raw(v.to_bytes(8, "little"))

    def i128(self, v: int) -> "Writer":
        return self.raw(v.to_bytes(16, "little", signed=True))

    def varint(self, v: int) -> "Writer":
        if v < 0:
            raise ValueError("varint must be non-negative")
        out = bytearray()
        while True:
            byte = v & 0x7F
            v >>= 7
            if v:
                out.append(byte | 0x80)
            else:
                out.append(byte)
                break
        return self.raw(bytes(out))

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes) -> None:
        self.data = bytes(data)
        self.pos = 0

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError(f"truncated input at offset {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.raw(1)[0]

    def u32(self) -> int:
        return int.from_bytes(self.raw(4), "little")

    def u64(self) -> int:
        return int.from_bytes(self.raw(8), "little")

    def i128(self) -> int:
        return int.from_bytes(self.raw(16), "little", signed=True)

    def varint(self) -> int:
        value = shift = 0
        start = self.pos
        while True:
            byte = self.u8()
            value |= (byte & 0x7F) << shift
            shift += 7
            if not byte & 0x80:
                break
            if shift > 63:
                raise DecodeError(f"varint too long at offset {start}")
        if self.pos - start > 1 and byte == 0:
            raise DecodeError(f"non-canonical varint at offset {start}")
        return value

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError(f"{len(self.data) - self.pos} trailing bytes")
