"""Nilsimsa locality-sensitive hashing over serialized pages.

Similar byte strings produce 256-bit digests with a small Hamming
distance, which is what makes single-pass structural clustering of
device pages possible.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "DIGEST_BITS",
    "StructuralDigest",
    "nilsimsa_digest",
    "hamming_distance",
    "similarity",
]

DIGEST_BITS = 256

# Byte-transition permutation table ("tran53") used by the trigram hash.
TRAN = bytes.fromhex(
    "02d69e6ff91d04abd022161fd873a1ac"
    "3b7062961e6e8f399d05144aa6beae0e"
    "cfb99c9ac76813e12da4eb518d646b50"
    "23800341ecbb71cc7a867f98f2365eee"
    "8ece4fb832b65f59dc1b314c7bf06301"
    "6cba07e81277493cda46fe2f791c9b30"
    "e300067e2e0f383321ada554caa729fc"
    "5a47697dc595b5f40b90a3816d255535"
    "f575740a26bf195c1ac6ff995d84aa66"
    "3eaf78b32043c1ed24eae63f18f3a042"
    "57085360c3c0834082d709bd442a67a8"
    "93e0c2569fd9dd8515b48a27289276de"
    "eff8b2b7c93d45944b110d65d5348b91"
    "0cfa87e97c5bb14de5d4cb10a21789bc"
    "dbb0e2978852f748d3612c3a2bd18cfb"
    "f1cde46ae7a9fdc437c8d2f6df58724e"
)

# popcount per byte value, precomputed for hamming_distance
_POPCOUNT = bytes(bin(i).count("1") for i in range(256))

_ALL_ZERO = bytes(32)


@dataclass(frozen=True)
class StructuralDigest:
    """256-bit Nilsimsa digest of a page's serialized structure + text."""

    bits: bytes

    def __post_init__(self) -> None:
        if len(self.bits) != 32:
            raise ValueError(f"digest must be 32 bytes, got {len(self.bits)}")

    def hex(self) -> str:
        """Lowercase hex, most-significant byte first (export encoding)."""
        return self.bits.hex()

    @classmethod
    def from_hex(cls, hexstr: str) -> "StructuralDigest":
        return cls(bytes.fromhex(hexstr))


def _tran3(a: int, b: int, c: int, n: int) -> int:
    return ((TRAN[(a + n) & 255] ^ TRAN[b] * (n + n + 1)) + TRAN[c ^ TRAN[n]]) & 255


def nilsimsa_digest(data: bytes) -> StructuralDigest:
    """Hash *data* with standard 256-bit Nilsimsa.

    Trigrams drawn from a 5-byte sliding window are accumulated into 256
    buckets through the tran53 transition hash; output bit b is set iff
    bucket[b] exceeds the mean bucket count. Empty and sub-trigram inputs
    yield the all-zero digest.
    """
    acc = [0] * 256
    # w holds up to the 4 previous bytes, most recent first
    w0 = w1 = w2 = w3 = -1
    for ch in data:
        if w1 > -1:
            acc[_tran3(ch, w0, w1, 0)] += 1
            if w2 > -1:
                acc[_tran3(ch, w0, w2, 1)] += 1
                acc[_tran3(ch, w1, w2, 2)] += 1
                if w3 > -1:
                    acc[_tran3(ch, w0, w3, 3)] += 1
                    acc[_tran3(ch, w1, w3, 4)] += 1
                    acc[_tran3(ch, w2, w3, 5)] += 1
                    acc[_tran3(w3, w0, ch, 6)] += 1
                    acc[_tran3(w3, w2, ch, 7)] += 1
        w0, w1, w2, w3 = ch, w0, w1, w2
    total = sum(acc)
    if total == 0:
        return StructuralDigest(_ALL_ZERO)
    code = bytearray(32)
    for i in range(256):
        # exact integer comparison: acc[i] > total / 256
        if acc[i] * 256 > total:
            code[i >> 3] |= 1 << (i & 7)
    code.reverse()
    return StructuralDigest(bytes(code))


def hamming_distance(a: StructuralDigest, b: StructuralDigest) -> int:
    """Number of differing bit positions, in [0, 256]."""
    return sum(_POPCOUNT[x ^ y] for x, y in zip(a.bits, b.bits))


def similarity(a: StructuralDigest, b: StructuralDigest) -> float:
    """Similarity s = (B - d) / B with B = 256; exact for every d."""
    return (DIGEST_BITS - hamming_distance(a, b)) / DIGEST_BITS
