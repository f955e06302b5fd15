"""IEEE 1149.1 TAP controller, a simulated target, and JTAGenum-style pin discovery.

The physical side is a header of numbered pins. A ``PinHarness`` binds a
``JtagTarget`` to some of those pins; a ``Cable`` is the attacker's bit-banged
probe on four chosen pins. Undriven pins float high (weak pull-ups, as in
JTAGenum); pins wired to GND always read low.
"""

from __future__ import annotations

import copy
import itertools
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import InvalidIdcode, NoDevice, NotConnected


class TapState(Enum):
    TEST_LOGIC_RESET = "Test-Logic-Reset"
    RUN_TEST_IDLE = "Run-Test/Idle"
    SELECT_DR_SCAN = "Select-DR-Scan"
    CAPTURE_DR = "Capture-DR"
    SHIFT_DR = "Shift-DR"
    EXIT1_DR = "Exit1-DR"
    PAUSE_DR = "Pause-DR"
    EXIT2_DR = "Exit2-DR"
    UPDATE_DR = "Update-DR"
    SELECT_IR_SCAN = "Select-IR-Scan"
    CAPTURE_IR = "Capture-IR"
    SHIFT_IR = "Shift-IR"
    EXIT1_IR = "Exit1-IR"
    PAUSE_IR = "Pause-IR"
    EXIT2_IR = "Exit2-IR"
    UPDATE_IR = "Update-IR"


S = TapState
# state -> (next on TMS=0, next on TMS=1)
_TRANSITIONS = {
    S.TEST_LOGIC_RESET: (S.RUN_TEST_IDLE, S.TEST_LOGIC_RESET),
    S.RUN_TEST_IDLE: (S.RUN_TEST_IDLE, S.SELECT_DR_SCAN),
    S.SELECT_DR_SCAN: (S.CAPTURE_DR, S.SELECT_IR_SCAN),
    S.CAPTURE_DR: (S.SHIFT_DR, S.EXIT1_DR),
    S.SHIFT_DR: (S.SHIFT_DR, S.EXIT1_DR),
    S.EXIT1_DR: (S.PAUSE_DR, S.UPDATE_DR),
    S.PAUSE_DR: (S.PAUSE_DR, S.EXIT2_DR),
    S.EXIT2_DR: (S.SHIFT_DR, S.UPDATE_DR),
    S.UPDATE_DR: (S.RUN_TEST_IDLE, S.SELECT_DR_SCAN),
    S.SELECT_IR_SCAN: (S.CAPTURE_IR, S.TEST_LOGIC_RESET),
    S.CAPTURE_IR: (S.SHIFT_IR, S.EXIT1_IR),
    S.SHIFT_IR: (S.SHIFT_IR, S.EXIT1_IR),
    S.EXIT1_IR: (S.PAUSE_IR, S.UPDATE_IR),
    S.PAUSE_IR: (S.PAUSE_IR, S.EXIT2_IR),
    S.EXIT2_IR: (S.SHIFT_IR, S.UPDATE_IR),
    S.UPDATE_IR: (S.RUN_TEST_IDLE, S.SELECT_DR_SCAN),
}


def tap_next(state: TapState, tms: int) -> TapState:
    return _TRANSITIONS[state][1 if tms else 0]


ROLES = ("TCK", "TMS", "TDI", "TDO", "GND", "TRST_N", "TEST")

# instruction opcodes on the simulated target; anything unknown acts as BYPASS
IDCODE = 0x01
MEM_ADDR = 0x10
MEM_DATA = 0x11


def idcode_valid(value: int) -> bool:
    return bool(value & 1) and value not in (0, 0xFFFFFFFF)


class JtagTarget:
    """Single-TAP device with IDCODE, BYPASS and a two-instruction memory mailbox.

    MEM_ADDR selects a 16-bit DR latched into the address register on
    Update-DR; MEM_DATA selects an 8-bit DR captured from memory at that
    address. Unmapped addresses read 0xFF. A blown fuse disables the TAP:
    TDO is never driven and the line reads all ones.
    """

    def __init__(self, idcode: int = 0x2A5B16E5, ir_length: int = 8,
                 memory: Optional[dict] = None, fuse_blown: bool = False):
        if not idcode & 1:
            raise ValueError("IDCODE bit 0 must be 1")
        if ir_length < 2:
            raise ValueError("IR must be at least 2 bits")
        self.idcode = idcode & 0xFFFFFFFF
        self.ir_length = ir_length
        self.memory = dict(memory or {})
        self.fuse_blown = fuse_blown
        self.reset()

    def reset(self):
        self.state = TapState.TEST_LOGIC_RESET
        self.instruction = IDCODE
        self.ir = 0
        self.dr = 0
        self.dr_len = 32
        self.mem_addr = 0

    @property
    def bypass(self) -> int:
        return (1 << self.ir_length) - 1

    def _dr_length(self) -> int:
        return {IDCODE: 32, MEM_ADDR: 16, MEM_DATA: 8}.get(self.instruction, 1)

    @property
    def tdo(self) -> Optional[int]:
        """Level driven on TDO, or None while the output is tri-stated."""
        if self.fuse_blown:
            return None
        if self.state == TapState.SHIFT_DR:
            return self.dr & 1
        if self.state == TapState.SHIFT_IR:
            return self.ir & 1
        return None

    def clock(self, tms: int, tdi: int, trst_n: int = 1) -> int:
        """One TCK cycle; returns TDO as sampled before the rising edge."""
        if not trst_n:
            self.reset()
            return 1
        out = self.tdo
        st = self.state
        if self.fuse_blown:
            self.state = tap_next(st, tms)
            return 1
        if st == TapState.TEST_LOGIC_RESET:
            self.instruction = IDCODE
        elif st == TapState.CAPTURE_DR:
            self.dr_len = self._dr_length()
            if self.instruction == IDCODE:
                self.dr = self.idcode
            elif self.instruction == MEM_DATA:
                self.dr = self.memory.get(self.mem_addr, 0xFF)
            elif self.instruction == MEM_ADDR:
                self.dr = self.mem_addr
            else:
                self.dr = 0
        elif st == TapState.SHIFT_DR:
            self.dr = (self.dr >> 1) | ((tdi & 1) << (self.dr_len - 1))
        elif st == TapState.UPDATE_DR:
            if self.instruction == MEM_ADDR:
                self.mem_addr = self.dr & 0xFFFF
        elif st == TapState.CAPTURE_IR:
            self.ir = 0b01
        elif st == TapState.SHIFT_IR:
            self.ir = (self.ir >> 1) | ((tdi & 1) << (self.ir_length - 1))
        elif st == TapState.UPDATE_IR:
            self.instruction = self.ir
        self.state = tap_next(st, tms)
        return 1 if out is None else out

    def to_dict(self, wiring: Optional[dict] = None) -> dict:
        d = {
            "ir_length": self.ir_length,
            "idcode": f"0x{self.idcode:08x}",
            "memory": _pack_memory(self.memory),
            "fuse_blown": self.fuse_blown,
        }
        if wiring is not None:
            d["wiring"] = dict(wiring)
        return d


def _pack_memory(memory: dict) -> dict:
    """Collapse an address->byte map into contiguous hex runs keyed by start address."""
    runs, start, buf, prev = {}, None, bytearray(), None
    for addr in sorted(memory):
        if prev is not None and addr == prev + 1:
            buf.append(memory[addr])
        else:
            if start is not None:
                runs[f"0x{start:04x}"] = buf.hex()
            start, buf = addr, bytearray([memory[addr]])
        prev = addr
    if start is not None:
        runs[f"0x{start:04x}"] = buf.hex()
    return runs


def _unpack_memory(runs: dict) -> dict:
    mem = {}
    for key, hexbytes in runs.items():
        base = int(key, 0)
        for i, b in enumerate(bytes.fromhex(hexbytes)):
            mem[base + i] = b
    return mem


@dataclass
class PinHarness:
    """A target soldered to a header: role -> pin number."""

    target: JtagTarget
    wiring: dict
    pin_count: Optional[int] = None

    def __post_init__(self):
        unknown = set(self.wiring) - set(ROLES)
        if unknown:
            raise ValueError(f"unknown roles: {sorted(unknown)}")
        pins = list(self.wiring.values())
        if len(set(pins)) != len(pins):
            raise ValueError("wiring must map roles to distinct pins")
        if self.pin_count is None:
            self.pin_count = max(pins, default=0)

    @property
    def pins(self) -> list:
        return sorted(self.wiring.values())

    def pin(self, role: str) -> Optional[int]:
        return self.wiring.get(role)


def load_target(path) -> PinHarness:
    d = json.loads(Path(path).read_text())
    target = JtagTarget(
        idcode=int(str(d["idcode"]), 0),
        ir_length=int(d.get("ir_length", 8)),
        memory=_unpack_memory(d.get("memory", {})),
        fuse_blown=bool(d.get("fuse_blown", False)),
    )
    wiring = {k: int(v) for k, v in d.get("wiring", {}).items()}
    return PinHarness(target, wiring)


def save_target(harness: PinHarness, path) -> None:
    Path(path).write_text(json.dumps(harness.target.to_dict(harness.wiring), indent=2) + "\n")


class Cable:
    """Bit-banged probe driving TCK/TMS/TDI on three pins and sampling TDO on a fourth."""

    def __init__(self, harnesses, tck: int, tms: int, tdi: int, tdo: int):
        if isinstance(harnesses, PinHarness):
            harnesses = [harnesses]
        self.harnesses = list(harnesses)
        if len({tck, tms, tdi, tdo}) != 4:
            raise ValueError("cable pins must be distinct")
        self.tck, self.tms, self.tdi, self.tdo = tck, tms, tdi, tdo
        self._ground = {h.pin("GND") for h in self.harnesses} - {None}
        self.cycles = 0

    @classmethod
    def direct(cls, harness: PinHarness) -> "Cable":
        w = harness.wiring
        missing = [r for r in ("TCK", "TMS", "TDI", "TDO") if r not in w]
        if missing:
            raise NotConnected(f"wiring lacks {', '.join(missing)}")
        return cls(harness, w["TCK"], w["TMS"], w["TDI"], w["TDO"])

    def _level(self, pin: Optional[int], driven: dict) -> int:
        if pin is None:
            return 1
        if pin in self._ground:
            return 0
        if pin in driven:
            return driven[pin]
        for h in self.harnesses:
            if h.wiring.get("TDO") == pin:
                v = h.target.tdo
                if v is not None:
                    return v
        return 1

    def cycle(self, tms: int, tdi: int) -> int:
        """Sample TDO, then pulse TCK once with TMS/TDI set up."""
        self.cycles += 1
        driven = {self.tms: tms & 1, self.tdi: tdi & 1, self.tck: 1}
        out = self._level(self.tdo, driven)
        edge = self.tck not in self._ground
        inputs = []
        for h in self.harnesses:
            inputs.append((
                h,
                edge and h.wiring.get("TCK") == self.tck,
                self._level(h.wiring.get("TMS"), driven),
                self._level(h.wiring.get("TDI"), driven),
                self._level(h.wiring.get("TRST_N"), driven) if "TRST_N" in h.wiring else 1,
            ))
        for h, rising, t_ms, t_di, trst in inputs:
            if not trst:
                h.target.reset()
            elif rising:
                h.target.clock(t_ms, t_di, trst)
        return out

    # TAP navigation, all starting from a known state

    def reset(self):
        for _ in range(5):
            self.cycle(1, 0)
        self.cycle(0, 0)  # Run-Test/Idle

    def shift(self, bits: Sequence[int], ir: bool = False) -> list:
        """From Run-Test/Idle, scan ``bits`` LSB-first through DR or IR and return to idle."""
        self.cycle(1, 0)  # Select-DR
        if ir:
            self.cycle(1, 0)  # Select-IR
        self.cycle(0, 0)  # Capture
        self.cycle(0, 0)  # Shift
        out = []
        last = len(bits) - 1
        for i, b in enumerate(bits):
            out.append(self.cycle(1 if i == last else 0, b))
        self.cycle(1, 0)  # Update
        self.cycle(0, 0)  # Run-Test/Idle
        return out

    def shift_value(self, value: int, width: int, ir: bool = False) -> int:
        got = self.shift([(value >> i) & 1 for i in range(width)], ir=ir)
        return sum(b << i for i, b in enumerate(got))


def _bits_to_int(bits) -> int:
    return sum(b << i for i, b in enumerate(bits))


def read_idcode(cable: Cable) -> int:
    """Reset the TAP and scan out the 32-bit IDCODE register."""
    if isinstance(cable, PinHarness):
        cable = Cable.direct(cable)
    cable.reset()
    value = cable.shift_value(0, 32)
    if value == 0xFFFFFFFF:
        raise NoDevice("TDO stuck high (all ones)", value)
    if value == 0:
        raise NoDevice("TDO stuck low (all zeros)", value)
    if not value & 1:
        raise InvalidIdcode(f"captured {value:#010x} has bit 0 clear", value)
    return value


BYPASS_PROBE = (0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 0, 1, 0, 1, 1, 0, 0, 1, 0, 0, 1, 1)
MAX_IR_LENGTH = 32


def bypass_echo(cable: Cable, pattern: Sequence[int] = BYPASS_PROBE) -> bool:
    """Fill IR with ones (BYPASS whatever its length) and check a one-cycle echo."""
    cable.reset()
    cable.shift([1] * MAX_IR_LENGTH, ir=True)
    got = cable.shift(list(pattern) + [0])
    return got[1:] == list(pattern)


@dataclass(frozen=True)
class PinAssignment:
    tck: int
    tms: int
    tdi: int
    tdo: int
    idcode: int

    def as_wiring(self) -> dict:
        return {"TCK": self.tck, "TMS": self.tms, "TDI": self.tdi, "TDO": self.tdo}

    def to_dict(self) -> dict:
        return {**self.as_wiring(), "idcode": f"0x{self.idcode:08x}"}


def measure_ir_length(cable: Cable) -> int:
    """Flush IR with zeros, then count cycles until a single 1 reappears on TDO."""
    cable.reset()
    for tms in (1, 1, 0, 0):  # Select-DR, Select-IR, Capture-IR, Shift-IR
        cable.cycle(tms, 0)
    for _ in range(MAX_IR_LENGTH):
        cable.cycle(0, 0)
    cable.cycle(0, 1)
    length = None
    for n in range(1, MAX_IR_LENGTH + 1):
        if cable.cycle(0, 0):
            length = n
            break
    cable.reset()  # leaves IR holding IDCODE again via Test-Logic-Reset
    if length is None:
        raise NotConnected("could not measure IR length")
    return length


def probe_assignment(harnesses, tck, tms, tdi, tdo) -> Optional[PinAssignment]:
    cable = Cable(harnesses, tck, tms, tdi, tdo)
    try:
        code = read_idcode(cable)
    except NoDevice:
        return None
    if not bypass_echo(cable):
        return None
    return PinAssignment(tck, tms, tdi, tdo, code)


def enumerate_pins(harnesses, candidate_pins: Iterable[int]) -> list:
    """Try every ordered choice of 4 distinct pins as (TCK, TMS, TDI, TDO).

    An assignment is reported when a valid IDCODE comes back and a BYPASS
    scan echoes a test pattern delayed by exactly one cycle.
    """
    if isinstance(harnesses, PinHarness):
        harnesses = [harnesses]
    pins = sorted(set(candidate_pins))
    if len(pins) < 4:
        raise ValueError("need at least 4 candidate pins")
    found = []
    for tck, tms, tdi, tdo in itertools.permutations(pins, 4):
        hit = probe_assignment(harnesses, tck, tms, tdi, tdo)
        if hit is not None:
            found.append(hit)
    return sorted(found, key=lambda a: (a.tck, a.tms, a.tdi, a.tdo))


def count_assignments(n_pins: int) -> int:
    return len(list(itertools.permutations(range(n_pins), 4)))


def read_memory(cable, addr: int, length: int) -> bytes:
    """Read ``length`` bytes starting at ``addr`` through the MEM_ADDR/MEM_DATA mailbox."""
    if length == 0:
        return b""
    if length < 0:
        raise ValueError("length must be non-negative")
    if isinstance(cable, PinHarness):
        cable = Cable.direct(cable)
    try:
        read_idcode(cable)
    except NoDevice as exc:
        raise NotConnected(f"no TAP responds on this wiring: {exc}") from exc
    ir_len = measure_ir_length(cable)
    out = bytearray()
    for a in range(addr, addr + length):
        cable.shift_value(MEM_ADDR, ir_len, ir=True)
        cable.shift_value(a & 0xFFFF, 16)
        cable.shift_value(MEM_DATA, ir_len, ir=True)
        out.append(cable.shift_value(0, 8))
    return bytes(out)


def clone(harnesses):
    """Independent deep copies, for evaluating assignments in parallel."""
    return copy.deepcopy(harnesses)
