"""DES (FIPS 46-3) in ECB mode, vectorized over blocks with numpy.

ECB blocks are independent, so a whole partition is processed as one uint64
array: each round is a handful of array-wide shifts, masks and table gathers.
Key parity bits are ignored, as PC-1 drops them.
"""

from __future__ import annotations

import numpy as np

from .errors import NotBlockAligned

__all__ = ["des_ecb", "encrypt", "decrypt", "key_schedule"]

# Tables are 1-based bit numbers, bit 1 being the most significant.
_IP = (
    58, 50, 42, 34, 26, 18, 10, 2, 60, 52, 44, 36, 28, 20, 12, 4,
    62, 54, 46, 38, 30, 22, 14, 6, 64, 56, 48, 40, 32, 24, 16, 8,
    57, 49, 41, 33, 25, 17, 9, 1, 59, 51, 43, 35, 27, 19, 11, 3,
    61, 53, 45, 37, 29, 21, 13, 5, 63, 55, 47, 39, 31, 23, 15, 7,
)
# FP is the inverse of IP
_FP = tuple(_IP.index(i) + 1 for i in range(1, 65))

_P = (
    16, 7, 20, 21, 29, 12, 28, 17, 1, 15, 23, 26, 5, 18, 31, 10,
    2, 8, 24, 14, 32, 27, 3, 9, 19, 13, 30, 6, 22, 11, 4, 25,
)
_PC1 = (
    57, 49, 41, 33, 25, 17, 9, 1, 58, 50, 42, 34, 26, 18,
    10, 2, 59, 51, 43, 35, 27, 19, 11, 3, 60, 52, 44, 36,
    63, 55, 47, 39, 31, 23, 15, 7, 62, 54, 46, 38, 30, 22,
    14, 6, 61, 53, 45, 37, 29, 21, 13, 5, 28, 20, 12, 4,
)
_PC2 = (
    14, 17, 11, 24, 1, 5, 3, 28, 15, 6, 21, 10,
    23, 19, 12, 4, 26, 8, 16, 7, 27, 20, 13, 2,
    41, 52, 31, 37, 47, 55, 30, 40, 51, 45, 33, 48,
    44, 49, 39, 56, 34, 53, 46, 42, 50, 36, 29, 32,
)
_ROTATIONS = (1, 1, 2, 2, 2, 2, 2, 2, 1, 2, 2, 2, 2, 2, 2, 1)

# S-boxes, 64 entries each in row-major order (row = outer bits, col = inner four).
_S = (
    "e4d12fb83a6c5907" "0f74e2d1a6cb9538" "41e8d62bfc973a50" "fc8249175b3ea06d",
    "f18e6b34972dc05a" "3d47f28ec01a69b5" "0e7ba4d158c6932f" "d8a13f42b67c05e9",
    "a09e63f51dc7b428" "d709346a285ecbf1" "d6498f30b12c5ae7" "1ad069874fe3b52c",
    "7de3069a1285bc4f" "d8b56f03472c1ae9" "a690cb7df13e5284" "3f06a1d8945bc72e",
    "2c417ab6853fd0e9" "eb2c47d150fa3986" "421bad78f9c5630e" "b8c71e2d6f09a453",
    "c1af92680d34e75b" "af427c9561de0b38" "9ef528c3704a1db6" "432c95fabe17608d",
    "4b2ef08d3c975a61" "d0b7491ae35c2f86" "14bdc37eaf680592" "6bd814a7950fe23c",
    "d2846fb1a93e50c7" "1fd8a374c56b0e92" "7b419ce206adf358" "21e74a8dfc90356b",
)

_M32 = (1 << 32) - 1


def _permute_int(value: int, table, width: int) -> int:
    out = 0
    for src in table:
        out = (out << 1) | ((value >> (width - src)) & 1)
    return out


def _byte_tables(table, width: int) -> np.ndarray:
    """Per-input-byte lookup tables so a bit permutation becomes 8 gathers."""
    nbytes = width // 8
    out = np.zeros((nbytes, 256), dtype=np.uint64)
    for b in range(nbytes):
        for v in range(256):
            out[b, v] = _permute_int(v << (8 * (nbytes - 1 - b)), table, width)
    return out


def _sp_tables() -> np.ndarray:
    """S-box output already moved through P, indexed by the raw 6-bit chunk."""
    out = np.zeros((8, 64), dtype=np.uint64)
    for box in range(8):
        nibbles = _S[box]
        for chunk in range(64):
            row = ((chunk >> 4) & 2) | (chunk & 1)
            col = (chunk >> 1) & 0xF
            s = int(nibbles[row * 16 + col], 16)
            out[box, chunk] = _permute_int(s << (28 - 4 * box), _P, 32)
    return out


_IP_T = _byte_tables(_IP, 64)
_FP_T = _byte_tables(_FP, 64)
_SP_T = _sp_tables()
_SHIFTS = np.arange(56, -1, -8, dtype=np.uint64)


def key_schedule(key: bytes) -> list[tuple[int, ...]]:
    """Sixteen round keys, each split into its eight 6-bit S-box chunks."""
    if len(key) != 8:
        raise ValueError(f"DES key must be 8 bytes, got {len(key)}")
    cd = _permute_int(int.from_bytes(key, "big"), _PC1, 64)
    c, d = cd >> 28, cd & 0xFFFFFFF
    rounds = []
    for r in _ROTATIONS:
        c = ((c << r) | (c >> (28 - r))) & 0xFFFFFFF
        d = ((d << r) | (d >> (28 - r))) & 0xFFFFFFF
        k = _permute_int((c << 28) | d, _PC2, 56)
        rounds.append(tuple((k >> (42 - 6 * j)) & 0x3F for j in range(8)))
    return rounds


def _permute(blocks: np.ndarray, tables: np.ndarray) -> np.ndarray:
    idx = (blocks[:, None] >> _SHIFTS) & np.uint64(0xFF)
    out = np.zeros(len(blocks), dtype=np.uint64)
    for b in range(8):
        out |= tables[b][idx[:, b]]
    return out


def _crypt(blocks: np.ndarray, subkeys) -> np.ndarray:
    x = _permute(blocks, _IP_T)
    left = x >> np.uint64(32)
    right = x & np.uint64(_M32)
    one, m6 = np.uint64(1), np.uint64(0x3F)
    for rk in subkeys:
        # 34-bit string R32 R1..R32 R1, from which E picks overlapping 6-bit windows
        wide = ((right & one) << np.uint64(33)) | (right << one) | (right >> np.uint64(31))
        f = np.zeros_like(right)
        for j in range(8):
            chunk = ((wide >> np.uint64(28 - 4 * j)) & m6) ^ np.uint64(rk[j])
            f |= _SP_T[j][chunk]
        left, right = right, left ^ f
    return _permute((right << np.uint64(32)) | left, _FP_T)


def des_ecb(data: bytes, key: bytes, direction: str = "decrypt") -> bytes:
    """Encrypt or decrypt ``data`` block by block, without padding."""
    if direction not in ("encrypt", "decrypt"):
        raise ValueError(f"direction must be 'encrypt' or 'decrypt', not {direction!r}")
    if len(data) % 8:
        raise NotBlockAligned(f"{len(data)} bytes is not a multiple of the 8-byte block")
    if not data:
        return b""
    subkeys = key_schedule(bytes(key))
    if direction == "decrypt":
        subkeys = subkeys[::-1]
    blocks = np.frombuffer(bytes(data), dtype=">u8").astype(np.uint64)
    return _crypt(blocks, subkeys).astype(">u8").tobytes()


def encrypt(data: bytes, key: bytes) -> bytes:
    return des_ecb(data, key, "encrypt")


def decrypt(data: bytes, key: bytes) -> bytes:
    return des_ecb(data, key, "decrypt")
