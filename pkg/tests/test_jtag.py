import itertools

import pytest
from hypothesis import given, settings, strategies as st

from unattended import fixtures
from unattended.errors import InvalidIdcode, NoDevice, NotConnected
from unattended.jtag import (IDCODE, Cable, JtagTarget, PinHarness, TapState, count_assignments,
                             enumerate_pins, load_target, measure_ir_length, probe_assignment,
                             read_idcode, read_memory, save_target, tap_next)

# IEEE 1149.1 state diagram transcribed as (state, tms) -> state by name,
# independently of the package's table.
DIAGRAM = """
Test-Logic-Reset 0 Run-Test/Idle | Test-Logic-Reset 1 Test-Logic-Reset
Run-Test/Idle 0 Run-Test/Idle | Run-Test/Idle 1 Select-DR-Scan
Select-DR-Scan 0 Capture-DR | Select-DR-Scan 1 Select-IR-Scan
Capture-DR 0 Shift-DR | Capture-DR 1 Exit1-DR
Shift-DR 0 Shift-DR | Shift-DR 1 Exit1-DR
Exit1-DR 0 Pause-DR | Exit1-DR 1 Update-DR
Pause-DR 0 Pause-DR | Pause-DR 1 Exit2-DR
Exit2-DR 0 Shift-DR | Exit2-DR 1 Update-DR
Update-DR 0 Run-Test/Idle | Update-DR 1 Select-DR-Scan
Select-IR-Scan 0 Capture-IR | Select-IR-Scan 1 Test-Logic-Reset
Capture-IR 0 Shift-IR | Capture-IR 1 Exit1-IR
Shift-IR 0 Shift-IR | Shift-IR 1 Exit1-IR
Exit1-IR 0 Pause-IR | Exit1-IR 1 Update-IR
Pause-IR 0 Pause-IR | Pause-IR 1 Exit2-IR
Exit2-IR 0 Shift-IR | Exit2-IR 1 Update-IR
Update-IR 0 Run-Test/Idle | Update-IR 1 Select-DR-Scan
"""
ORACLE = {}
for line in DIAGRAM.strip().splitlines():
    for edge in line.split("|"):
        a, tms, b = edge.split()
        ORACLE[(a, int(tms))] = b

JTAG4 = ("TCK", "TMS", "TDI", "TDO")


def test_fsm_matches_diagram_exhaustively():
    assert len(ORACLE) == 32 and len(TapState) == 16
    for s in TapState:
        for tms in (0, 1):
            assert tap_next(s, tms).value == ORACLE[(s.value, tms)]


def test_fsm_examples():
    assert tap_next(TapState.TEST_LOGIC_RESET, 0) == TapState.RUN_TEST_IDLE
    assert tap_next(TapState.SHIFT_DR, 0) == TapState.SHIFT_DR


@pytest.mark.parametrize("state", list(TapState))
def test_five_ones_reset(state):
    for _ in range(5):
        state = tap_next(state, 1)
    assert state == TapState.TEST_LOGIC_RESET


def to_shift_dr(t):
    for tms in (0, 1, 0, 0):  # Idle, Select-DR, Capture-DR, Shift-DR
        t.clock(tms, 0)


def test_idcode_shifts_out_lsb_first():
    t = JtagTarget(0x2A5B16E5)
    to_shift_dr(t)
    bits = [t.clock(0, 0) for _ in range(32)]
    assert sum(b << i for i, b in enumerate(bits)) == 0x2A5B16E5


@settings(max_examples=60)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=64))
def test_bypass_delays_by_one(pattern):
    t = JtagTarget(ir_length=8)
    for tms in (0, 1, 1, 0, 0):  # to Shift-IR
        t.clock(tms, 0)
    for i in range(8):
        t.clock(1 if i == 7 else 0, 1)  # all-ones IR = BYPASS
    for tms in (1, 1, 0, 0):  # Update-IR, Select-DR, Capture-DR, Shift-DR
        t.clock(tms, 0)
    out = [t.clock(0, b) for b in pattern + [0]]
    assert out[1:] == pattern
    assert out[0] == 0  # BYPASS captures 0


def test_trst_pins_reset():
    t = JtagTarget()
    to_shift_dr(t)
    t.clock(0, 0, trst_n=0)
    assert t.state == TapState.TEST_LOGIC_RESET and t.instruction == IDCODE
    t.clock(0, 0, trst_n=0)
    assert t.state == TapState.TEST_LOGIC_RESET


def test_target_validation():
    with pytest.raises(ValueError):
        JtagTarget(idcode=0x2A5B16E4)


def test_read_idcode(lock):
    assert read_idcode(Cable.direct(lock)) == 0x2A5B16E5


def test_floating_tdo_is_no_device(lock):
    # TDO probe on the unconnected TEST pin reads the pull-up
    cable = Cable(lock, 1, 2, 3, 7)
    with pytest.raises(NoDevice) as exc:
        read_idcode(cable)
    assert exc.value.value == 0xFFFFFFFF


def test_tck_tms_swaps_never_read_valid_idcode(lock):
    w = fixtures.LOCK_WIRING
    for tck, tms in itertools.permutations(range(1, 8), 2):
        if (tck, tms) == (w["TCK"], w["TMS"]) or {tck, tms} & {w["TDI"], w["TDO"]}:
            continue
        cable = Cable(lock, tck, tms, w["TDI"], w["TDO"])
        with pytest.raises((NoDevice, InvalidIdcode)):
            read_idcode(cable)


def test_enumerate_finds_lock_wiring(lock):
    assert count_assignments(7) == 840
    found = enumerate_pins(lock, range(1, 8))
    assert [a.as_wiring() for a in found] == [{"TCK": 1, "TMS": 2, "TDI": 3, "TDO": 4}]
    assert found[0].idcode == fixtures.LOCK_IDCODE


def test_enumerate_fuse_blown():
    assert enumerate_pins(fixtures.lock_fixture(fuse_blown=True), range(1, 8)) == []


def test_enumerate_nothing_attached():
    assert enumerate_pins([], range(1, 5)) == []


def test_enumerate_two_targets():
    a = PinHarness(JtagTarget(0x10000001), {"TCK": 1, "TMS": 2, "TDI": 3, "TDO": 4}, 8)
    b = PinHarness(JtagTarget(0x20000003, ir_length=5), {"TCK": 8, "TMS": 6, "TDI": 7, "TDO": 5}, 8)
    found = enumerate_pins([a, b], range(1, 9))
    assert [(x.as_wiring(), x.idcode) for x in found] == [
        (a.wiring, 0x10000001), (b.wiring, 0x20000003)]


def test_enumeration_complete_and_sound_over_6_pins():
    wirings = list(itertools.permutations(range(1, 7), 4))
    assert len(wirings) == 360
    for pins in wirings:
        truth = dict(zip(JTAG4, pins))
        h = PinHarness(JtagTarget(), truth, 6)
        found = enumerate_pins(h, range(1, 7))
        assert truth in [a.as_wiring() for a in found]
        for a in found:  # soundness: every report re-verifies
            assert read_idcode(Cable(h, a.tck, a.tms, a.tdi, a.tdo)) == a.idcode


def test_probe_rejects_wrong_tdi(lock):
    # IDCODE still reads with TDI on the wrong pin, the BYPASS echo must catch it
    assert read_idcode(Cable(lock, 1, 2, 7, 4)) == fixtures.LOCK_IDCODE
    assert probe_assignment(lock, 1, 2, 7, 4) is None


def test_measure_ir_length():
    for n in (2, 4, 8, 13):
        h = PinHarness(JtagTarget(ir_length=n), {"TCK": 1, "TMS": 2, "TDI": 3, "TDO": 4})
        assert measure_ir_length(Cable.direct(h)) == n


def test_read_info_memory(lock):
    seg = read_memory(lock, 0x1000, 256)
    assert len(seg) == 256 and b"539348" in seg


def test_read_unmapped_and_empty(lock):
    assert read_memory(lock, 0xFF00, 1) == b"\xff"
    assert read_memory(lock, 0x1000, 0) == b""


def test_read_memory_bad_wiring(lock):
    with pytest.raises(NotConnected):
        read_memory(Cable(lock, 1, 2, 3, 7), 0x1000, 4)
    with pytest.raises(NotConnected):
        read_memory(PinHarness(lock.target, {"TCK": 1, "TMS": 2}), 0x1000, 4)


def test_read_memory_side_effect_free(lock):
    before = dict(lock.target.memory)
    read_memory(lock, 0x1000, 64)
    assert lock.target.memory == before


def test_target_file_round_trip(tmp_path, lock):
    path = tmp_path / "t.json"
    save_target(lock, path)
    back = load_target(path)
    assert back.wiring == lock.wiring
    assert back.target.memory == lock.target.memory
    assert back.target.idcode == lock.target.idcode


def test_packaged_lock_targets_match_builders():
    for updated in (False, True):
        a, b = fixtures.load_lock_target(updated), fixtures.lock_fixture(updated)
        assert a.target.memory == b.target.memory and a.wiring == b.wiring
