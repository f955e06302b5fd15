"""From encrypted flash partition to readable secrets.

carve -> DES-ECB decrypt (no padding) -> zlib inflate -> ``key = value`` config,
plus a scanner for numeric lock codes in a raw memory segment.
"""

from __future__ import annotations

import json
import re
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Union

from .carver import Region, carve, zlib_header_ok
from .des import des_ecb
from .errors import CorruptStream, NoDerivation, NotZlib, TextinessError

__all__ = [
    "KeyDerivation", "LookupDerivation", "derive_des_key", "register_derivation",
    "load_key_registry", "des_ecb", "inflate_zlib", "decrypt_partition",
    "ConfigRecord", "extract_config", "LockCodes", "CodeHit", "scan_codes",
]


@dataclass(frozen=True)
class KeyDerivation:
    name: str
    derive: Callable[[str], bytes]

    def __call__(self, model: str) -> bytes:
        key = bytes(self.derive(model))
        if len(key) != 8:
            raise ValueError(f"derivation {self.name!r} produced {len(key)} bytes, not 8")
        return key


class LookupDerivation(KeyDerivation):
    """Known model-string -> key pairs; the on-device key hash itself is not reproduced."""

    def __init__(self, name: str, table: Mapping[str, Union[str, bytes]]):
        keys = {}
        for model, key in table.items():
            key = key.encode("ascii") if isinstance(key, str) else bytes(key)
            if len(key) != 8:
                raise ValueError(f"key for {model!r} must be 8 bytes")
            keys[model] = key
        object.__setattr__(self, "table", keys)

        def lookup(model: str) -> bytes:
            try:
                return keys[model]
            except KeyError:
                raise NoDerivation(f"no key known for model string {model!r}") from None

        super().__init__(name, lookup)


# "C100 2.0" is the camera's model/hardware-version string; its key is ASCII "249c6923"
KNOWN_KEYS = {"C100 2.0": "249c6923"}

_REGISTRY: dict = {}


def register_derivation(derivation: KeyDerivation) -> KeyDerivation:
    _REGISTRY[derivation.name] = derivation
    return derivation


register_derivation(LookupDerivation("lookup", KNOWN_KEYS))
# test-only: the first eight bytes of the model string, verbatim
register_derivation(KeyDerivation("first-8-bytes-of-model", lambda m: m.encode("latin-1")[:8]))


def load_key_registry(path, name: str = "lookup") -> LookupDerivation:
    """JSON object mapping model string -> 8-character key text."""
    table = dict(KNOWN_KEYS)
    table.update(json.loads(Path(path).read_text()))
    return LookupDerivation(name, table)


def derive_des_key(model_string: str, derivation: Union[str, KeyDerivation] = "lookup") -> bytes:
    if isinstance(derivation, str):
        try:
            derivation = _REGISTRY[derivation]
        except KeyError:
            raise NoDerivation(f"no derivation named {derivation!r}") from None
    return derivation(model_string)


def inflate_zlib(data: bytes, strict: bool = True) -> bytes:
    """Inflate one RFC 1950 stream; trailing bytes after the stream are ignored.

    ``strict`` additionally requires CMF 0x78 (32 KiB window), which is what
    embedded zlib writers emit and what makes a wrong-key decryption reject
    at the header about 1 time in 8000.
    """
    data = bytes(data)
    if len(data) < 2 or not zlib_header_ok(data[0], data[1]) or (strict and data[0] != 0x78):
        raise NotZlib(f"no zlib header (first bytes {data[:2].hex() or 'none'})")
    d = zlib.decompressobj()
    try:
        out = d.decompress(data) + d.flush()
    except zlib.error as exc:
        raise CorruptStream(f"deflate stream rejected: {exc}") from exc
    if not d.eof:
        raise CorruptStream("stream truncated before its final block")
    # zlib already checked the trailer; check again independently of it
    consumed = len(data) - len(d.unused_data)
    trailer = data[consumed - 4:consumed]
    if int.from_bytes(trailer, "big") != zlib.adler32(out):
        raise CorruptStream("Adler-32 mismatch")
    return out


def decrypt_partition(img, region, key: bytes, strict: bool = True) -> bytes:
    """Carve ``region``, DES-ECB decrypt it under ``key`` and inflate the result.

    A ``NotZlib`` here almost always means the key is wrong.
    """
    ciphertext = carve(img, region)
    return inflate_zlib(des_ecb(ciphertext, key, "decrypt"), strict=strict)


DEFAULT_SCHEMA = {
    "ip": r"(ip|ip_?addr(ess)?|lan_?ip)",
    "protocol": r"(protocols?|proto)",
    "username": r"(user(_?name)?|login|account)",
    "password": r"(passw(or)?d|pass|pwd)(_?hash)?",
    "ssid": r"(wifi_?)?ssid",
}

_HEX_DIGEST = re.compile(r"[0-9a-f]{32}|[0-9a-f]{40}")


@dataclass
class ConfigRecord:
    ip: Optional[str] = None
    protocols: list = field(default_factory=list)
    username: Optional[str] = None
    password_hash: Optional[str] = None
    ssid: Optional[str] = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.password_hash is not None and not _HEX_DIGEST.fullmatch(self.password_hash):
            raise ValueError("password_hash must be 32 or 40 lowercase hex characters")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ConfigRecord":
        return cls(**d)


def printable_fraction(data: bytes) -> float:
    if not data:
        return 1.0
    ok = sum(1 for b in data if 0x20 <= b < 0x7F or b in (0x09, 0x0A, 0x0D))
    return ok / len(data)


def extract_config(plaintext: bytes, schema: Optional[Mapping[str, str]] = None,
                   min_printable: float = 0.9) -> ConfigRecord:
    """Parse ``key = value`` lines; keys not in the schema land in ``extras``."""
    if isinstance(plaintext, str):
        plaintext = plaintext.encode()
    if printable_fraction(plaintext) < min_printable:
        raise TextinessError(f"only {printable_fraction(plaintext):.0%} printable; wrong decryption?")
    patterns = {f: re.compile(p, re.IGNORECASE) for f, p in (schema or DEFAULT_SCHEMA).items()}
    rec = ConfigRecord()
    for n, raw in enumerate(plaintext.decode("latin-1").splitlines()):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if "=" not in line:
            rec.extras[f"_line{n}"] = line
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        value = value.strip("\"'")
        field_name = next((f for f, rx in patterns.items() if rx.fullmatch(key)), None)
        if field_name == "protocol":
            rec.protocols.extend(p.strip() for p in value.split(",") if p.strip())
        elif field_name == "password":
            h = value.lower()
            if _HEX_DIGEST.fullmatch(h) and rec.password_hash is None:
                rec.password_hash = h
            else:
                rec.extras[key] = value
        elif field_name in ("ip", "username", "ssid") and getattr(rec, field_name) is None:
            setattr(rec, field_name, value)
        else:
            rec.extras[key] = value
    return rec


@dataclass(frozen=True)
class CodeHit:
    code: str
    offset: int
    encoding: str  # "ascii" or "bcd"


@dataclass
class LockCodes:
    programming_code: Optional[str] = None
    user_codes: list = field(default_factory=list)
    hits: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def offsets(self) -> list:
        return [h.offset for h in self.hits]

    def to_dict(self) -> dict:
        return {
            "programming_code": self.programming_code,
            "user_codes": list(self.user_codes),
            "hits": [asdict(h) for h in self.hits],
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LockCodes":
        return cls(d.get("programming_code"), list(d.get("user_codes", [])),
                   [CodeHit(**h) for h in d.get("hits", [])], list(d.get("notes", [])))


_ASCII_RUN = re.compile(rb"[0-9]+")


def _is_bcd(b: int) -> bool:
    return (b >> 4) <= 9 and (b & 0xF) <= 9


def scan_codes(segment: bytes, base: int = 0, min_len: int = 4, max_len: int = 8) -> LockCodes:
    """Find 4-8 digit codes stored as ASCII digits or packed BCD.

    Bytes inside ASCII digit runs are never reinterpreted as BCD (ASCII digits
    are themselves valid BCD bytes), and all-zero BCD runs are treated as
    cleared memory. The longest 6-8 digit code is taken as the programming
    code; every other code is reported as a user code.
    """
    segment = bytes(segment)
    if len(segment) < 4:
        raise ValueError("segment must be at least 4 bytes")
    hits = []
    ascii_bytes = set()
    for m in _ASCII_RUN.finditer(segment):
        ascii_bytes.update(range(m.start(), m.end()))
        if min_len <= len(m.group()) <= max_len:
            hits.append(CodeHit(m.group().decode(), base + m.start(), "ascii"))
    i = 0
    while i < len(segment):
        if i in ascii_bytes or not _is_bcd(segment[i]):
            i += 1
            continue
        j = i
        while j < len(segment) and j not in ascii_bytes and _is_bcd(segment[j]):
            j += 1
        run = segment[i:j]
        digits = run.hex()
        if min_len <= len(digits) <= max_len and any(run):
            hits.append(CodeHit(digits, base + i, "bcd"))
        i = j
    hits.sort(key=lambda h: h.offset)

    codes = LockCodes(hits=hits)
    candidates = [h for h in hits if 6 <= len(h.code) <= 8]
    prog = None
    if candidates:
        longest = max(len(h.code) for h in candidates)
        top = [h for h in candidates if len(h.code) == longest]
        prog = top[0]
        codes.programming_code = prog.code
        if len(top) > 1:
            codes.notes.append(
                f"ambiguous programming code: {len(top)} runs of {longest} digits; took the first")
    codes.user_codes = [h.code for h in hits if h is not prog]
    encodings = sorted({h.encoding for h in hits})
    if encodings:
        codes.notes.append(f"matched encodings: {', '.join(encodings)}")
    return codes
