"""Debug-header pin identification from a diode/continuity measurement matrix.

Each cell is what a meter in diode mode shows between a header pin and a
known MCU signal: ~0 mV for a direct trace, a forward drop for a path through
protection diodes or pull-ups, or OL for no path. Only shorts identify a pin.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .errors import AmbiguousSignal, ConflictingPin, InvalidMatrix

DEFAULT_TOLERANCE_MV = 5.0
NEAR_SHORT_MV = 100.0
MAX_DROP_MV = 3000.0


@dataclass(frozen=True)
class Measurement:
    """A reading in millivolts; ``None`` means open loop (OL)."""

    mv: Optional[float]

    def __post_init__(self):
        if self.mv is not None and not 0 <= self.mv < MAX_DROP_MV:
            raise InvalidMatrix(f"reading {self.mv} mV outside [0, {MAX_DROP_MV:g})")

    @classmethod
    def parse(cls, text) -> "Measurement":
        if isinstance(text, Measurement):
            return text
        if text is None:
            return cls(None)
        s = str(text).strip()
        if s.upper() == "OL":
            return cls(None)
        try:
            return cls(float(s))
        except ValueError:
            raise InvalidMatrix(f"unreadable cell {text!r}") from None

    @property
    def is_open(self) -> bool:
        return self.mv is None

    def is_short(self, tolerance_mv: float = DEFAULT_TOLERANCE_MV) -> bool:
        return self.mv is not None and self.mv <= tolerance_mv

    def is_drop(self, tolerance_mv: float = DEFAULT_TOLERANCE_MV) -> bool:
        return self.mv is not None and self.mv > tolerance_mv

    def __str__(self):
        return "OL" if self.mv is None else f"{self.mv:g}"


@dataclass
class MeasurementMatrix:
    header_pins: list
    reference_signals: list
    cells: list  # rows per header pin, Measurement per signal
    ground: str = "GND"

    def __post_init__(self):
        self.header_pins = list(self.header_pins)
        self.reference_signals = list(self.reference_signals)
        self.cells = [[Measurement.parse(c) for c in row] for row in self.cells]
        if len(self.cells) != len(self.header_pins):
            raise InvalidMatrix("one row of cells per header pin required")
        for pin, row in zip(self.header_pins, self.cells):
            if len(row) != len(self.reference_signals):
                raise InvalidMatrix(f"row {pin} has {len(row)} cells, expected {len(self.reference_signals)}")
        if len(set(self.header_pins)) != len(self.header_pins):
            raise InvalidMatrix("duplicate header pin labels")
        if len(set(self.reference_signals)) != len(self.reference_signals):
            raise InvalidMatrix("duplicate signal labels")
        if self.reference_signals.count(self.ground) != 1:
            raise InvalidMatrix(f"exactly one {self.ground!r} reference column required")

    def cell(self, pin, signal) -> Measurement:
        return self.cells[self.header_pins.index(pin)][self.reference_signals.index(signal)]

    def permuted(self, order: Sequence[int]) -> "MeasurementMatrix":
        return MeasurementMatrix([self.header_pins[i] for i in order], self.reference_signals,
                                 [self.cells[i] for i in order], self.ground)

    @classmethod
    def from_csv(cls, source, ground: str = "GND") -> "MeasurementMatrix":
        """CSV: header row of signal labels (first cell ignored), then one row per pin."""
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            text = Path(source).read_text()
        else:
            text = str(source)
        rows = [r for r in csv.reader(io.StringIO(text)) if any(c.strip() for c in r)]
        if len(rows) < 2:
            raise InvalidMatrix("matrix needs a header row and at least one pin row")
        signals = [c.strip() for c in rows[0][1:]]
        pins = [r[0].strip() for r in rows[1:]]
        cells = [[c.strip() for c in r[1:]] for r in rows[1:]]
        return cls(pins, signals, cells, ground)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pin"] + self.reference_signals)
        for pin, row in zip(self.header_pins, self.cells):
            w.writerow([pin] + [str(c) for c in row])
        return buf.getvalue()


@dataclass
class PinMap:
    assignment: dict  # header pin -> signal
    unassigned: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"assignment": dict(self.assignment), "unassigned": list(self.unassigned),
                "notes": list(self.notes)}


def infer_pinout(m: MeasurementMatrix, short_tolerance_mv: float = DEFAULT_TOLERANCE_MV) -> PinMap:
    """Assign a signal to every header pin that has a direct short to it."""
    if short_tolerance_mv < 0:
        raise ValueError("tolerance must be >= 0")
    shorts = {
        pin: [s for s, c in zip(m.reference_signals, row) if c.is_short(short_tolerance_mv)]
        for pin, row in zip(m.header_pins, m.cells)
    }
    for sig in m.reference_signals:
        pins = [p for p in m.header_pins if sig in shorts[p]]
        if len(pins) > 1:
            raise AmbiguousSignal(sig, pins)
    for pin, sigs in shorts.items():
        if len(sigs) > 1:
            raise ConflictingPin(pin, sigs)

    assignment, unassigned, notes = {}, [], []
    for pin, row in zip(m.header_pins, m.cells):
        if shorts[pin]:
            assignment[pin] = shorts[pin][0]
            ignored = [s for s, c in zip(m.reference_signals, row)
                       if c.is_drop(short_tolerance_mv) and s != m.ground]
            if ignored:
                notes.append(f"{pin}: forward drops to {', '.join(ignored)} ignored (not direct traces)")
        else:
            unassigned.append(pin)
            notes.append(f"{pin}: no direct short to any reference signal")
    return PinMap(assignment, unassigned, notes)


def validate_matrix(m: MeasurementMatrix, short_tolerance_mv: float = DEFAULT_TOLERANCE_MV) -> list:
    warnings = []
    for pin, row in zip(m.header_pins, m.cells):
        if not any(c.is_short(short_tolerance_mv) for c in row):
            warnings.append(f"{pin}: pin unidentifiable (no short in row)")
    for j, sig in enumerate(m.reference_signals):
        if not any(row[j].is_short(short_tolerance_mv) for row in m.cells):
            warnings.append(f"{sig}: signal not on header (no short in column)")
    for pin, row in zip(m.header_pins, m.cells):
        for sig, c in zip(m.reference_signals, row):
            if c.is_drop(short_tolerance_mv) and c.mv < NEAR_SHORT_MV:
                warnings.append(f"{pin}/{sig}: suspicious near-short ({c.mv:g} mV)")
    return warnings
