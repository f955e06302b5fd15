"""Password hash reversal: dictionary attack and rainbow tables.

A chain has ``chain_len`` plaintext columns. Column i is hashed and reduced
with the position-``i`` reduction to give column i+1, so a chain performs
``chain_len - 1`` hash/reduce steps and only (start, end) is stored.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import random
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

HASH_ALGS = {"md5": 16, "sha1": 20}
TABLE_MAGIC = b"RTBL"
TABLE_VERSION = 1
# tables of one set differ only in this offset added to every reduction
TABLE_STRIDE = 65536

DEFAULT_CHARSET = "abcdefghijklmnopqrstuvwxyz0123456789"


def hash_bytes(data: Union[str, bytes], alg: str = "md5") -> bytes:
    if isinstance(data, str):
        data = data.encode()
    return hashlib.new(alg, data).digest()


def hash_hex(data: Union[str, bytes], alg: str = "md5") -> str:
    return hash_bytes(data, alg).hex()


@dataclass(frozen=True)
class TableParams:
    hash_alg: str = "md5"
    charset: str = DEFAULT_CHARSET
    min_len: int = 1
    max_len: int = 4
    chain_len: int = 100
    chain_count: int = 2000
    seed: int = 0
    table_index: int = 0

    def __post_init__(self):
        if self.hash_alg not in HASH_ALGS:
            raise ValueError(f"hash_alg must be one of {sorted(HASH_ALGS)}")
        if not self.charset or len(set(self.charset)) != len(self.charset):
            raise ValueError("charset must be non-empty with distinct characters")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.chain_len < 2 or self.chain_count < 1:
            raise ValueError("need chain_len >= 2 and chain_count >= 1")
        if self.space_size < self.chain_count:
            raise ValueError("plaintext space is smaller than chain_count")
        if self.table_index < 0:
            raise ValueError("table_index must be >= 0")

    @property
    def space_size(self) -> int:
        n = len(self.charset)
        return sum(n ** k for k in range(self.min_len, self.max_len + 1))

    @property
    def digest_size(self) -> int:
        return HASH_ALGS[self.hash_alg]

    @property
    def reduction_offset(self) -> int:
        return self.table_index * TABLE_STRIDE


class PlaintextSpace:
    """Bijection between [0, size) and all strings over ``charset`` of the allowed lengths."""

    def __init__(self, params: TableParams):
        self.charset = params.charset
        self.radix = len(params.charset)
        self.bands = []  # (length, first index, count)
        off = 0
        for k in range(params.min_len, params.max_len + 1):
            cnt = self.radix ** k
            self.bands.append((k, off, cnt))
            off += cnt
        self.size = off
        self._pos = {c: i for i, c in enumerate(params.charset)}

    def plaintext(self, idx: int) -> str:
        for k, off, cnt in self.bands:
            if idx < off + cnt:
                idx -= off
                break
        else:
            raise IndexError(idx)
        out = []
        for _ in range(k):
            idx, r = divmod(idx, self.radix)
            out.append(self.charset[r])
        return "".join(out)

    def index(self, text: str) -> int:
        for k, off, cnt in self.bands:
            if k == len(text):
                v = 0
                for ch in reversed(text):
                    v = v * self.radix + self._pos[ch]
                return off + v
        raise ValueError(f"{text!r} is outside the plaintext space")

    def __contains__(self, text: str) -> bool:
        try:
            self.index(text)
        except (ValueError, KeyError):
            return False
        return True


def reduce(digest: bytes, position: int, params: TableParams, space: Optional[PlaintextSpace] = None) -> str:
    """Position-dependent map from a digest back into the plaintext space."""
    if not 0 <= position < params.chain_len:
        raise ValueError(f"position {position} outside [0, {params.chain_len})")
    space = space or PlaintextSpace(params)
    return space.plaintext((int.from_bytes(digest, "little") + position + params.reduction_offset) % space.size)


@dataclass
class RainbowTable:
    params: TableParams
    starts: list  # plaintext-space indices, aligned with ends
    ends: list  # sorted ascending
    duplicates_removed: int = 0

    def __post_init__(self):
        self.space = PlaintextSpace(self.params)

    def __len__(self):
        return len(self.ends)

    @property
    def rows(self) -> list:
        sp = self.space
        return [(sp.plaintext(s), sp.plaintext(e)) for s, e in zip(self.starts, self.ends)]

    def chain(self, start: int) -> list:
        """All plaintext columns of the chain beginning at index ``start``."""
        p = self.space.plaintext(start)
        out = [p]
        alg, size, sp = self.params.hash_alg, self.space.size, self.space
        off = self.params.reduction_offset
        for i in range(self.params.chain_len - 1):
            d = hashlib.new(alg, p.encode()).digest()
            p = sp.plaintext((int.from_bytes(d, "little") + i + off) % size)
            out.append(p)
        return out

    def save(self, path) -> None:
        meta = json.dumps(asdict(self.params), sort_keys=True).encode()
        rows = np.empty((len(self), 2), dtype="<u8")
        rows[:, 0] = self.starts
        rows[:, 1] = self.ends
        with open(path, "wb") as f:
            f.write(TABLE_MAGIC)
            f.write(struct.pack("<HI", TABLE_VERSION, len(meta)))
            f.write(meta)
            f.write(struct.pack("<II", len(self), self.duplicates_removed))
            f.write(rows.tobytes())

    @classmethod
    def load(cls, path) -> "RainbowTable":
        raw = Path(path).read_bytes()
        if raw[:4] != TABLE_MAGIC:
            raise ValueError("not a rainbow table file (bad magic)")
        version, mlen = struct.unpack_from("<HI", raw, 4)
        if version != TABLE_VERSION:
            raise ValueError(f"unsupported table version {version}")
        pos = 10
        params = TableParams(**json.loads(raw[pos:pos + mlen]))
        pos += mlen
        n, dups = struct.unpack_from("<II", raw, pos)
        pos += 8
        rows = np.frombuffer(raw, dtype="<u8", count=2 * n, offset=pos).reshape(n, 2)
        return cls(params, rows[:, 0].tolist(), rows[:, 1].tolist(), dups)


def _start_indices(params: TableParams) -> list:
    # drawn one at a time so a larger chain_count extends the same prefix
    rng = random.Random(params.seed)
    size = PlaintextSpace(params).size
    seen, out = set(), []
    while len(out) < params.chain_count:
        v = rng.randrange(size)
        if v not in seen:
            seen.add(v)
            out.append(v)
    return out


def build_table(params: TableParams, starts: Optional[Iterable[str]] = None) -> RainbowTable:
    """Generate the chains; when several end on the same plaintext only the first is kept.

    ``starts`` overrides the seeded start plaintexts (mainly for hand checks).
    """
    space = PlaintextSpace(params)
    alg, size, steps = params.hash_alg, space.size, params.chain_len - 1
    off = params.reduction_offset
    plaintext = space.plaintext
    by_end = {}
    dups = 0
    start_idx = _start_indices(params) if starts is None else [space.index(p) for p in starts]
    for start in start_idx:
        p = plaintext(start)
        idx = start
        for i in range(steps):
            d = hashlib.new(alg, p.encode()).digest()
            idx = (int.from_bytes(d, "little") + i + off) % size
            p = plaintext(idx)
        if idx in by_end:
            dups += 1  # merged chain; the earlier start is kept
        else:
            by_end[idx] = start
    ends = sorted(by_end)
    return RainbowTable(params, [by_end[e] for e in ends], ends, dups)


@dataclass
class CrackResult:
    hash: str
    plaintext: Optional[str]
    method: str
    work: int
    hash_alg: str = "md5"
    false_alarms: int = 0

    def __post_init__(self):
        if self.plaintext is not None and hash_hex(self.plaintext, self.hash_alg) != self.hash:
            raise ValueError("plaintext does not hash to the target")

    @property
    def found(self) -> bool:
        return self.plaintext is not None

    def to_dict(self) -> dict:
        return asdict(self)


def _target_digest(target_hash: Union[str, bytes], alg: str) -> bytes:
    digest = bytes.fromhex(target_hash) if isinstance(target_hash, str) else bytes(target_hash)
    if len(digest) != HASH_ALGS[alg]:
        raise ValueError(f"{alg} digests are {HASH_ALGS[alg]} bytes, got {len(digest)}")
    return digest


def _lookup_one(table: RainbowTable, target: bytes):
    params = table.params
    alg, size, t = params.hash_alg, table.space.size, params.chain_len
    off = params.reduction_offset
    plaintext = table.space.plaintext
    target_int = int.from_bytes(target, "little")
    ends = table.ends
    work = false_alarms = 0
    for col in range(t - 2, -1, -1):
        idx = (target_int + col + off) % size
        for i in range(col + 1, t - 1):
            d = hashlib.new(alg, plaintext(idx).encode()).digest()
            work += 1
            idx = (int.from_bytes(d, "little") + i + off) % size
        k = bisect.bisect_left(ends, idx)
        if k == len(ends) or ends[k] != idx:
            continue
        # rebuild the chain up to this column and confirm
        p = plaintext(table.starts[k])
        for i in range(col + 1):
            d = hashlib.new(alg, p.encode()).digest()
            work += 1
            if i == col:
                if d == target:
                    return p, work, false_alarms
                break
            p = plaintext((int.from_bytes(d, "little") + i + off) % size)
        false_alarms += 1
    return None, work, false_alarms


def lookup(tables, target_hash: Union[str, bytes]) -> CrackResult:
    """Try the target at every column of each table, newest column first.

    ``tables`` is one table or a sequence of tables sharing a hash algorithm
    (usually the same parameters with different ``table_index``). Only
    verified plaintexts are returned.
    """
    if isinstance(tables, RainbowTable):
        tables = [tables]
    if not tables:
        raise ValueError("no tables given")
    alg = tables[0].params.hash_alg
    if any(tb.params.hash_alg != alg for tb in tables):
        raise ValueError("tables use different hash algorithms")
    target = _target_digest(target_hash, alg)
    work = false_alarms = 0
    for tb in tables:
        p, w, fa = _lookup_one(tb, target)
        work += w
        false_alarms += fa
        if p is not None:
            return CrackResult(target.hex(), p, "rainbow", work, alg, false_alarms)
    return CrackResult(target.hex(), None, "rainbow", work, alg, false_alarms)


def build_table_set(params: TableParams, count: int) -> list:
    """``count`` tables differing only in ``table_index`` (and hence reduction)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    base = asdict(params)
    return [build_table(TableParams(**{**base, "table_index": params.table_index + k,
                                       "seed": params.seed + k})) for k in range(count)]


def dictionary_attack(wordlist: Iterable[str], target_hash: Union[str, bytes], hash_alg: str = "md5") -> CrackResult:
    target = _target_digest(target_hash, hash_alg)
    work = 0
    seen_any = False
    for word in wordlist:
        seen_any = True
        work += 1
        if hashlib.new(hash_alg, word.encode()).digest() == target:
            return CrackResult(target.hex(), word, "dictionary", work, hash_alg)
    if not seen_any:
        raise ValueError("wordlist is empty")
    return CrackResult(target.hex(), None, "dictionary", work, hash_alg)


def load_wordlist(path) -> list:
    """Newline-delimited words; a trailing newline does not add an empty word."""
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    return text.split("\n")[:-1] if text.endswith("\n") else text.split("\n")


def salted_lookup_demo(table, plaintext: str, salt: Union[str, bytes]) -> CrackResult:
    """Look up hash(salt || plaintext) in an unsalted table.

    The salt must be longer than ``max_len`` so the salted input cannot fall
    inside the table's plaintext space.
    """
    first = table if isinstance(table, RainbowTable) else table[0]
    salt = salt.encode() if isinstance(salt, str) else bytes(salt)
    if not salt:
        raise ValueError("salt must be non-empty")
    if len(salt) <= first.params.max_len:
        raise ValueError(f"salt must be longer than max_len={first.params.max_len} bytes")
    digest = hashlib.new(first.params.hash_alg, salt + plaintext.encode()).digest()
    return lookup(table, digest)
