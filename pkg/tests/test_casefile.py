import itertools

import pytest

from unattended.casefile import CaseFile, generate_report
from unattended.errors import DuplicateRecord, NothingToReport, PersistError
from unattended.pipeline import LockCodes, CodeHit


def fixed_clock():
    ticks = itertools.count()
    return lambda: f"2024-01-01T00:00:{next(ticks):02d}+00:00"


def lock_case(root, clock=None):
    case = CaseFile.create(root, "lock", {"model": "keypad lock", "mcu": "MSP430G2433"},
                           clock=clock or fixed_clock())
    case.record("pinmap", {"assignment": {"JT1.1": "TCK", "JT1.5": "GND"}}, "JT1 pin-out")
    codes = LockCodes("539348", ["5370", "2865"], [CodeHit("539348", 0x1001, "ascii")])
    case.record("codes", codes, "codes from info memory", meta={"fuse_blown": False})
    return case


def test_record_and_reload(tmp_path):
    case = lock_case(tmp_path / "c")
    back = CaseFile.load(tmp_path / "c")
    assert back.records == case.records
    assert back.verify() == []
    assert back.payload("codes-002")["programming_code"] == "539348"
    assert back.get("pinmap-001").kind == "pinmap"


def test_binary_payload(tmp_path):
    case = CaseFile.create(tmp_path / "c")
    rec = case.record("image", b"\x00\xff" * 100, "segment", source="jtag")
    assert case.payload(rec) == b"\x00\xff" * 100 and rec.media == "binary"
    assert (tmp_path / "c" / "blobs" / rec.payload_digest).exists()


def test_duplicate_id_rejected(tmp_path):
    case = lock_case(tmp_path / "c")
    with pytest.raises(DuplicateRecord):
        case.record("config", {}, "again", id="codes-002")


def test_tampered_payload_detected(tmp_path):
    case = lock_case(tmp_path / "c")
    rec = case.get("codes-002")
    (case.root / rec.payload_path).write_text("{}")
    assert CaseFile.load(case.root).verify() == ["codes-002"]


def test_bad_kind_and_source(tmp_path):
    case = CaseFile.create(tmp_path / "c")
    with pytest.raises(ValueError):
        case.record("photo", {}, "x")
    with pytest.raises(ValueError):
        case.record("image", b"", "x", source="usb")


def test_persist_errors(tmp_path):
    with pytest.raises(PersistError):
        CaseFile.load(tmp_path / "missing")
    lock_case(tmp_path / "c")
    with pytest.raises(PersistError):
        CaseFile.create(tmp_path / "c")
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(PersistError):
        CaseFile.create(blocker / "sub")


def test_empty_case_report(tmp_path):
    with pytest.raises(NothingToReport):
        generate_report(CaseFile.create(tmp_path / "c"))


def test_lock_report(tmp_path):
    text = generate_report(lock_case(tmp_path / "c"), reproducible=True)
    for section in ("DEVICE", "TIMELINE", "FINDINGS", "MITIGATIONS"):
        assert section in text
    assert "programming code 539348 [codes-002]" in text
    assert "fuse_blown: false => JTAG open" in text and "6 V, 100 mA" in text


def test_camera_report(tmp_path):
    case = CaseFile.create(tmp_path / "c", "cam", {"model": "C100", "hardware_version": "2.0"})
    case.record("config", {"username": "share1", "password_hash": "a" * 32, "protocols": ["rtsp"]}, "config")
    case.record("crack", {"hash": "a" * 32, "plaintext": "sunflower88", "method": "dictionary", "work": 5,
                          "hash_alg": "md5", "username": "share1"}, "cracked")
    md = generate_report(case, "md", reproducible=True)
    assert md.startswith("# Case cam")
    assert "credential recovered: share1 / sunflower88" in md
    assert "partition encryption: broken" in md and "salting: absent" in md


def test_report_references_existing_records(tmp_path):
    case = lock_case(tmp_path / "c")
    text = generate_report(case, reproducible=True)
    ids = {r.id for r in case.records}
    import re
    assert set(re.findall(r"\[([a-z]+-\d{3})\]", text)) <= ids


def test_reproducible_reports_identical(tmp_path):
    a = generate_report(lock_case(tmp_path / "a", clock=lambda: "2024-01-01T00:00:00+00:00"), reproducible=True)
    b = generate_report(lock_case(tmp_path / "b", clock=lambda: "2031-05-05T12:00:00+00:00"), reproducible=True)
    assert a == b
    assert "generated" in generate_report(CaseFile.load(tmp_path / "a"))
    with pytest.raises(ValueError):
        generate_report(CaseFile.load(tmp_path / "a"), fmt="pdf")
