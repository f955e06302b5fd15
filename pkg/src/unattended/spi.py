"""25-series SPI NOR flash: command codec, device model, dumping and bus replay.

Everything is modeled at byte granularity per chip-select frame (SPI mode 0):
a frame is the MOSI bytes clocked out by the master and the MISO bytes clocked
back in, always of equal length.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Protocol

import numpy as np

from .errors import (
    DumpAborted,
    EmptyFrame,
    MalformedCommand,
    NothingToReconstruct,
    UnsupportedCommand,
)

DEFAULT_CAPACITY = 0x800000  # 8 MiB, the camera's flash part
DEFAULT_JEDEC_ID = bytes([0x20, 0x40, 0x17])  # placeholder, configurable
IDLE_LEVEL = 0xFF  # MISO is pulled up while the device is not driving it


class Opcode(IntEnum):
    WREN = 0x06
    READ = 0x03
    FAST_READ = 0x0B
    RDSR = 0x05
    RDSR2 = 0x35
    RDID = 0x9F


ADDRESSED = frozenset({Opcode.READ, Opcode.FAST_READ})
READ_CLASS = frozenset({Opcode.READ, Opcode.FAST_READ, Opcode.RDSR, Opcode.RDSR2, Opcode.RDID})


@dataclass(frozen=True)
class FlashGeometry:
    capacity_bytes: int = DEFAULT_CAPACITY
    page_size: int = 256
    address_width: int = 3
    jedec_id: bytes = DEFAULT_JEDEC_ID
    fast_read_dummy: int = 1

    def __post_init__(self):
        cap = self.capacity_bytes
        if cap <= 0 or cap & (cap - 1):
            raise ValueError(f"capacity must be a power of two, got {cap:#x}")
        if self.page_size <= 0 or cap % self.page_size:
            raise ValueError("capacity must be a multiple of page_size")
        if self.address_width not in (3, 4):
            raise ValueError("address_width must be 3 or 4")
        if self.address_width == 3 and cap > 1 << 24:
            raise ValueError("devices above 16 MiB need 4-byte addressing")
        if len(self.jedec_id) != 3:
            raise ValueError("jedec_id must be 3 bytes")
        object.__setattr__(self, "jedec_id", bytes(self.jedec_id))

    def header_len(self, opcode: int) -> int:
        """Bytes of a frame that belong to the command rather than the response."""
        if opcode == Opcode.READ:
            return 1 + self.address_width
        if opcode == Opcode.FAST_READ:
            return 1 + self.address_width + self.fast_read_dummy
        return 1


@dataclass
class FlashImage:
    geometry: FlashGeometry
    data: bytes

    def __post_init__(self):
        self.data = bytes(self.data)
        if len(self.data) != self.geometry.capacity_bytes:
            raise ValueError(
                f"image is {len(self.data):#x} bytes, geometry says {self.geometry.capacity_bytes:#x}"
            )

    def __len__(self):
        return len(self.data)

    def read(self, address: int, length: int) -> bytes:
        """Sequential read with wrap-around at the end of the array."""
        cap = len(self.data)
        address %= cap
        if address + length <= cap:
            return self.data[address:address + length]
        out = bytearray()
        while length:
            n = min(length, cap - address)
            out += self.data[address:address + n]
            length -= n
            address = 0
        return bytes(out)

    @classmethod
    def load(cls, path, geometry: Optional[FlashGeometry] = None) -> "FlashImage":
        data = Path(path).read_bytes()
        if geometry is None:
            geometry = FlashGeometry(capacity_bytes=len(data))
        return cls(geometry, data)

    def save(self, path) -> None:
        Path(path).write_bytes(self.data)


@dataclass(frozen=True)
class SpiCommand:
    opcode: int
    address: Optional[int] = None
    payload_len: int = 0

    def __post_init__(self):
        try:
            op = Opcode(self.opcode)
        except ValueError:
            raise UnsupportedCommand(f"opcode {self.opcode:#04x} is not supported") from None
        object.__setattr__(self, "opcode", op)
        if (op in ADDRESSED) != (self.address is not None):
            need = "requires an address" if op in ADDRESSED else "takes no address"
            raise ValueError(f"{op.name} {need}")
        if self.payload_len < 0:
            raise ValueError("payload_len must be non-negative")


@dataclass(frozen=True)
class SpiTransaction:
    mosi: bytes
    miso: bytes
    seq: int = 0
    command: Optional[SpiCommand] = None
    response: Optional[bytes] = None

    @property
    def decoded(self) -> bool:
        return self.command is not None


def encode_command(cmd: SpiCommand, geometry: FlashGeometry = FlashGeometry()) -> bytes:
    """MOSI bytes for a whole frame: opcode, big-endian address, dummy bytes, response window."""
    if not isinstance(cmd, SpiCommand):
        raise UnsupportedCommand(f"not a command: {cmd!r}")
    out = bytearray([cmd.opcode])
    if cmd.address is not None:
        out += (cmd.address % (1 << 8 * geometry.address_width)).to_bytes(geometry.address_width, "big")
    if cmd.opcode == Opcode.FAST_READ:
        out += bytes(geometry.fast_read_dummy)
    out += bytes(cmd.payload_len)
    return bytes(out)


def decode_transaction(mosi: bytes, miso: bytes, geometry: FlashGeometry = FlashGeometry(),
                       seq: int = 0) -> SpiTransaction:
    """Interpret one captured frame; unknown or truncated commands are kept undecoded."""
    mosi, miso = bytes(mosi), bytes(miso)
    if len(mosi) != len(miso):
        raise ValueError(f"MOSI/MISO length mismatch: {len(mosi)} != {len(miso)}")
    if not mosi:
        raise EmptyFrame("zero-length frame")
    try:
        op = Opcode(mosi[0])
    except ValueError:
        return SpiTransaction(mosi, miso, seq)
    hlen = geometry.header_len(op)
    if len(mosi) < hlen:
        return SpiTransaction(mosi, miso, seq)
    address = None
    if op in ADDRESSED:
        address = int.from_bytes(mosi[1:1 + geometry.address_width], "big")
    cmd = SpiCommand(op, address, len(mosi) - hlen)
    return SpiTransaction(mosi, miso, seq, cmd, miso[hlen:])


class FlashDevice:
    """Behavioral model of a read-only 25-series flash chip.

    ``bus_contention`` stands for the host SoC fighting the programmer for the
    bus: every response byte is XORed with pseudo-random noise.
    """

    def __init__(self, image: FlashImage, status: int = 0x00, status2: int = 0x00,
                 bus_contention: bool = False, noise_seed: int = 0x5A5A):
        self.image = image
        self.geometry = image.geometry
        self.status = status
        self.status2 = status2
        self.bus_contention = bus_contention
        self._noise = np.random.default_rng(noise_seed)

    def execute(self, mosi: bytes) -> bytes:
        mosi = bytes(mosi)
        if not mosi:
            raise EmptyFrame("zero-length frame")
        geo = self.geometry
        try:
            op = Opcode(mosi[0])
        except ValueError:
            return bytes([IDLE_LEVEL]) * len(mosi)
        hlen = geo.header_len(op)
        if op in ADDRESSED and len(mosi) < hlen:
            raise MalformedCommand(f"{op.name} frame of {len(mosi)} bytes is shorter than its {hlen}-byte header")
        n = len(mosi) - hlen
        if op in ADDRESSED:
            address = int.from_bytes(mosi[1:1 + geo.address_width], "big")
            body = self.image.read(address, n)
        elif op == Opcode.RDID:
            body = (geo.jedec_id + bytes(max(0, n - 3)))[:n]
        elif op == Opcode.RDSR:
            body = bytes([self.status]) * n
        elif op == Opcode.RDSR2:
            body = bytes([self.status2]) * n
        else:  # WREN latches the write-enable bit
            self.status |= 0x02
            body = bytes([IDLE_LEVEL]) * n
        if self.bus_contention and n:
            noise = self._noise.integers(1, 256, size=n, dtype=np.uint8)
            body = (np.frombuffer(body, dtype=np.uint8) ^ noise).tobytes()
        return bytes([IDLE_LEVEL]) * hlen + body


class SpiDriver(Protocol):
    """Anything that can clock one chip-select frame; hardware backends plug in here."""

    def transfer(self, mosi: bytes) -> bytes: ...


class SimulatedDriver:
    def __init__(self, device: FlashDevice, fail_at: Optional[int] = None):
        self.device = device
        self.fail_at = fail_at
        self.count = 0

    def transfer(self, mosi: bytes) -> bytes:
        self.count += 1
        if self.fail_at is not None and self.count >= self.fail_at:
            raise IOError(f"simulated link failure on transaction {self.count}")
        return self.device.execute(mosi)


@dataclass
class Transcript:
    transactions: list = field(default_factory=list)

    def __iter__(self) -> Iterator[SpiTransaction]:
        return iter(self.transactions)

    def __len__(self):
        return len(self.transactions)

    def append(self, mosi: bytes, miso: bytes, geometry: FlashGeometry = FlashGeometry()) -> SpiTransaction:
        seq = self.transactions[-1].seq + 1 if self.transactions else 0
        tx = decode_transaction(mosi, miso, geometry, seq)
        self.transactions.append(tx)
        return tx

    def dumps(self) -> str:
        return "".join(
            json.dumps({"seq": t.seq, "mosi_hex": t.mosi.hex(), "miso_hex": t.miso.hex()}) + "\n"
            for t in self.transactions
        )

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str, geometry: FlashGeometry = FlashGeometry()) -> "Transcript":
        return cls.from_records((json.loads(line) for line in text.splitlines() if line.strip()), geometry)

    @classmethod
    def load(cls, path, geometry: FlashGeometry = FlashGeometry()) -> "Transcript":
        return cls.loads(Path(path).read_text(), geometry)

    @classmethod
    def from_records(cls, records: Iterable[dict], geometry: FlashGeometry = FlashGeometry()) -> "Transcript":
        out, last = [], None
        for rec in records:
            seq = int(rec["seq"])
            if last is not None and seq <= last:
                raise ValueError(f"transcript sequence numbers must increase ({seq} after {last})")
            last = seq
            out.append(decode_transaction(bytes.fromhex(rec["mosi_hex"]),
                                          bytes.fromhex(rec["miso_hex"]), geometry, seq))
        return cls(out)


class ReplayDriver:
    """Serves recorded MISO bytes back; the MOSI stream must match the recording."""

    def __init__(self, transcript: Transcript):
        self._it = iter(transcript)

    def transfer(self, mosi: bytes) -> bytes:
        try:
            tx = next(self._it)
        except StopIteration:
            raise IOError("transcript exhausted") from None
        if tx.mosi != bytes(mosi):
            raise IOError(f"MOSI diverges from recording at seq {tx.seq}")
        return tx.miso


def replay(transcript: Transcript, device: FlashDevice) -> bool:
    """True iff the device reproduces every recorded MISO byte."""
    return all(device.execute(t.mosi) == t.miso for t in transcript)


def dump_image(driver: SpiDriver, geometry: FlashGeometry = FlashGeometry(),
               chunk_len: int = 4096, opcode: int = Opcode.READ) -> tuple[FlashImage, Transcript]:
    """Read the whole array with sequential READ (or FAST_READ) frames."""
    if chunk_len < 1:
        raise ValueError("chunk_len must be >= 1")
    cap = geometry.capacity_bytes
    transcript = Transcript()
    hlen = geometry.header_len(opcode)
    buf = bytearray(cap)
    done = 0
    while done < cap:
        n = min(chunk_len, cap - done)
        mosi = encode_command(SpiCommand(opcode, done, n), geometry)
        try:
            miso = driver.transfer(mosi)
        except (IOError, OSError) as exc:
            raise DumpAborted(f"dump aborted at {done:#x}: {exc}", coverage=done, transcript=transcript) from exc
        if len(miso) != len(mosi):
            raise DumpAborted(f"short frame at {done:#x}", coverage=done, transcript=transcript)
        transcript.append(mosi, miso, geometry)
        buf[done:done + n] = miso[hlen:]
        done += n
    return FlashImage(geometry, bytes(buf)), transcript


@dataclass
class CoverageMap:
    covered: np.ndarray  # bool per byte
    conflicts: int = 0

    @property
    def covered_bytes(self) -> int:
        return int(np.count_nonzero(self.covered))

    @property
    def fraction(self) -> float:
        return self.covered_bytes / len(self.covered)

    def ranges(self) -> list[tuple[int, int]]:
        """Covered spans as end-exclusive (start, end) pairs."""
        c = np.concatenate(([False], self.covered, [False])).astype(np.int8)
        edges = np.flatnonzero(np.diff(c))
        return [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]


def reconstruct_from_transcript(transcript: Iterable[SpiTransaction],
                                geometry: FlashGeometry = FlashGeometry(),
                                fill: int = IDLE_LEVEL) -> tuple[FlashImage, CoverageMap]:
    """Rebuild the flash contents from the read responses seen on the bus.

    Overlapping reads resolve last-write-wins; each read that changes already
    covered bytes counts as one conflict.
    """
    cap = geometry.capacity_bytes
    data = np.full(cap, fill, dtype=np.uint8)
    covered = np.zeros(cap, dtype=bool)
    conflicts = 0
    reads = 0
    for tx in transcript:
        cmd = tx.command
        if cmd is None or cmd.opcode not in ADDRESSED or not tx.response:
            continue
        reads += 1
        resp = np.frombuffer(tx.response, dtype=np.uint8)
        idx = (cmd.address + np.arange(len(resp))) % cap
        prior = covered[idx]
        if prior.any() and np.any(data[idx][prior] != resp[prior]):
            conflicts += 1
        data[idx] = resp
        covered[idx] = True
    if not reads:
        raise NothingToReconstruct("transcript holds no decodable READ/FAST_READ")
    return FlashImage(geometry, data.tobytes()), CoverageMap(covered, conflicts)
