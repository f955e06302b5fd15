"""Structure discovery in raw flash dumps: magic signatures, entropy, strings, carving."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import RegionOutOfBounds, WindowTooLarge

HIGH_ENTROPY_BITS = 7.5
DEFAULT_WINDOW = 4096


def _buf(img) -> bytes:
    return img.data if hasattr(img, "data") else bytes(img)


def zlib_header_ok(cmf: int, flg: int) -> bool:
    """RFC 1950 header: deflate method, window <= 32K, FCHECK, no preset dictionary."""
    return (cmf & 0x0F) == 8 and (cmf >> 4) <= 7 and ((cmf << 8) | flg) % 31 == 0 and not flg & 0x20


def _validate_zlib(buf: bytes, off: int) -> bool:
    return off + 2 <= len(buf) and zlib_header_ok(buf[off], buf[off + 1])


def _validate_gzip(buf: bytes, off: int) -> bool:
    # CM must be deflate, reserved flag bits clear
    return off + 4 <= len(buf) and buf[off + 2] == 8 and not buf[off + 3] & 0xE0


def _validate_uimage(buf: bytes, off: int) -> bool:
    return off + 64 <= len(buf)


def _validate_squashfs(buf: bytes, off: int) -> bool:
    if off + 96 > len(buf):
        return False
    major = int.from_bytes(buf[off + 28:off + 30], "little")
    return major in (3, 4)


VALIDATORS: dict = {
    "none": lambda buf, off: True,
    "zlib": _validate_zlib,
    "gzip": _validate_gzip,
    "uimage": _validate_uimage,
    "squashfs": _validate_squashfs,
}


def _uimage_len(buf, off):
    return 64 + int.from_bytes(buf[off + 12:off + 16], "big")


def _squashfs_len(buf, off):
    return int.from_bytes(buf[off + 40:off + 48], "little")


LENGTH_FIELDS: dict = {"uImage": _uimage_len, "squashfs": _squashfs_len}


@dataclass(frozen=True)
class Signature:
    name: str
    magic: bytes
    mask: Optional[bytes] = None
    validator: str = "none"

    def __post_init__(self):
        if len(self.magic) < 2:
            raise ValueError("magic must be at least 2 bytes")
        if self.mask is not None and len(self.mask) != len(self.magic):
            raise ValueError("mask length must equal magic length")
        if self.validator not in VALIDATORS:
            raise ValueError(f"unknown validator {self.validator!r}")

    def check(self, buf: bytes, off: int) -> bool:
        return VALIDATORS[self.validator](buf, off)


BUILTIN_SIGNATURES = (
    Signature("zlib", b"\x78\x00", mask=b"\xff\x00", validator="zlib"),
    Signature("gzip", b"\x1f\x8b", validator="gzip"),
    Signature("squashfs", b"hsqs", validator="squashfs"),
    Signature("uImage", b"\x27\x05\x19\x56", validator="uimage"),
    Signature("jffs2", b"\x19\x85"),
)


def load_signatures(path) -> list:
    """JSON list of {name, magic_hex, mask_hex?, validator?}."""
    out = []
    for d in json.loads(Path(path).read_text()):
        mask = d.get("mask_hex")
        out.append(Signature(d["name"], bytes.fromhex(d["magic_hex"]),
                             bytes.fromhex(mask) if mask else None, d.get("validator", "none")))
    return out


@dataclass(frozen=True)
class Region:
    start: int
    end: int
    kind: str
    score: float = 1.0

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad region [{self.start:#x}, {self.end:#x})")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")

    def __len__(self):
        return self.end - self.start

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "kind": self.kind, "score": round(self.score, 4)}


def _match_offsets(arr: np.ndarray, sig: Signature) -> np.ndarray:
    n = len(arr) - len(sig.magic) + 1
    if n <= 0:
        return np.empty(0, dtype=np.int64)
    mask = sig.mask or b"\xff" * len(sig.magic)
    hit = np.ones(n, dtype=bool)
    for i, (m, k) in enumerate(zip(sig.magic, mask)):
        if k == 0:
            continue
        col = arr[i:i + n]
        hit &= (col & k) == (m & k) if k != 0xFF else col == m
    return np.flatnonzero(hit)


def scan_signatures(img, sigs: Iterable[Signature] = BUILTIN_SIGNATURES) -> list:
    """Every offset matching a magic and its validator, as regions sorted by start.

    A region runs to its declared length when the format has one, otherwise to
    the next hit (or the end of the image).
    """
    buf = _buf(img)
    if not buf:
        raise ValueError("empty image")
    arr = np.frombuffer(buf, dtype=np.uint8)
    hits = []
    for sig in sigs:
        for off in _match_offsets(arr, sig).tolist():
            if sig.check(buf, off):
                hits.append((off, sig))
    hits.sort(key=lambda h: (h[0], h[1].name))
    regions = []
    starts = [h[0] for h in hits]
    for i, (off, sig) in enumerate(hits):
        nxt = next((s for s in starts[i + 1:] if s > off), len(buf))
        end = nxt
        length_of = LENGTH_FIELDS.get(sig.name)
        if length_of is not None:
            declared = length_of(buf, off)
            if 0 < declared and off + declared <= len(buf):
                end = off + declared
        score = 1.0 if sig.validator != "none" else 0.75
        regions.append(Region(off, end, sig.name, score))
    return regions


def shannon_entropy(window) -> float:
    counts = np.bincount(np.frombuffer(bytes(window), dtype=np.uint8), minlength=256)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum()) + 0.0  # + 0.0 folds -0.0


def entropy_profile(img, window: int = DEFAULT_WINDOW, stride: Optional[int] = None) -> list:
    """(offset, bits per byte) for each full window."""
    buf = _buf(img)
    if window < 16:
        raise ValueError("window must be >= 16 bytes")
    if window > len(buf):
        raise WindowTooLarge(f"window {window} exceeds image length {len(buf)}")
    stride = stride or max(1, window // 2)
    arr = np.frombuffer(buf, dtype=np.uint8)
    out = []
    for off in range(0, len(buf) - window + 1, stride):
        counts = np.bincount(arr[off:off + window], minlength=256)
        p = counts[counts > 0] / window
        out.append((off, float(-(p * np.log2(p)).sum()) + 0.0))
    return out


def high_entropy_regions(img, window: int = DEFAULT_WINDOW, threshold: float = HIGH_ENTROPY_BITS,
                         stride: Optional[int] = None) -> list:
    """Merge consecutive above-threshold windows into ``high-entropy`` regions."""
    profile = entropy_profile(img, window, stride)
    regions, cur = [], None
    for off, h in profile:
        if h > threshold:
            if cur is not None and off <= cur[1]:
                cur[1] = off + window
                cur[2].append(h)
            else:
                if cur is not None:
                    regions.append(cur)
                cur = [off, off + window, [h]]
        elif cur is not None:
            regions.append(cur)
            cur = None
    if cur is not None:
        regions.append(cur)
    return [Region(s, e, "high-entropy", min(1.0, float(np.mean(hs)) / 8.0)) for s, e, hs in regions]


def find_string(img, needle) -> list:
    """All match offsets, ascending, overlaps included."""
    if isinstance(needle, str):
        needle = needle.encode()
    if not needle:
        raise ValueError("needle must be non-empty")
    buf = _buf(img)
    out, i = [], buf.find(needle)
    while i >= 0:
        out.append(i)
        i = buf.find(needle, i + 1)
    return out


def carve(img, region) -> bytes:
    """Byte-exact copy of [start, end)."""
    buf = _buf(img)
    start, end = (region.start, region.end) if isinstance(region, Region) else region
    if not 0 <= start < end <= len(buf):
        raise RegionOutOfBounds(f"[{start:#x}, {end:#x}) outside image of {len(buf):#x} bytes")
    return buf[start:end]
