import json
import random
import zlib

import pytest
from hypothesis import given, settings, strategies as st

from unattended import fixtures
from unattended.carver import Region
from unattended.errors import CorruptStream, NoDerivation, NotBlockAligned, NotZlib, TextinessError
from unattended.jtag import read_memory
from unattended.pipeline import (ConfigRecord, LockCodes, decrypt_partition, derive_des_key, extract_config,
                                 inflate_zlib, load_key_registry, scan_codes)

PARTITION = Region(0x40000, 0x50000, "user-config")


def test_derive_known_model():
    key = derive_des_key("C100 2.0")
    assert key == b"249c6923"
    assert int.from_bytes(key, "big") == 0x3234396336393233


def test_derive_unknown_model():
    with pytest.raises(NoDerivation):
        derive_des_key("X999 9.9")
    with pytest.raises(NoDerivation):
        derive_des_key("C100 2.0", "no-such-derivation")


def test_truncation_derivation():
    assert derive_des_key("ABCDEFGH1.0", "first-8-bytes-of-model") == b"ABCDEFGH"
    with pytest.raises(ValueError):
        derive_des_key("short", "first-8-bytes-of-model")


def test_registry_file(tmp_path):
    path = tmp_path / "keys.json"
    path.write_text(json.dumps({"C200 1.0": "abcdefgh"}))
    reg = load_key_registry(path)
    assert derive_des_key("C200 1.0", reg) == b"abcdefgh"
    assert derive_des_key("C100 2.0", reg) == b"249c6923"


def test_inflate_round_trip():
    data = random.Random(0).randbytes(65536)
    assert inflate_zlib(zlib.compress(data)) == data


def test_inflate_empty_stream():
    assert inflate_zlib(bytes.fromhex("789c030000000001")) == b""


def test_inflate_detects_flipped_bit():
    blob = bytearray(zlib.compress(b"config text " * 50))
    blob[-6] ^= 0x01
    with pytest.raises(CorruptStream):
        inflate_zlib(bytes(blob))


def test_inflate_bad_header_and_truncation():
    with pytest.raises(NotZlib):
        inflate_zlib(b"\x00\x01abc")
    with pytest.raises(CorruptStream):
        inflate_zlib(zlib.compress(b"x" * 1000)[:-8])


def test_inflate_ignores_trailing_padding():
    assert inflate_zlib(zlib.compress(b"abc") + b"\x99" * 100) == b"abc"


def test_strict_header_gate():
    c = zlib.compressobj(9, zlib.DEFLATED, 10)  # 1 KiB window: CMF 0x28
    stream = c.compress(b"abc") + c.flush()
    assert stream[0] != 0x78
    with pytest.raises(NotZlib):
        inflate_zlib(stream)
    assert inflate_zlib(stream, strict=False) == b"abc"


def test_decrypt_camera_partition(camera):
    assert decrypt_partition(camera.image, PARTITION, derive_des_key("C100 2.0")) == camera.config


def test_wrong_keys_rejected(camera):
    rng = random.Random(5)
    rejected = 0
    for _ in range(1000):
        try:
            decrypt_partition(camera.image, PARTITION, rng.randbytes(8))
        except NotZlib:
            rejected += 1
        except CorruptStream:
            pass  # header slipped through, the stream itself was still refused
    assert rejected >= 999


def test_zero_range_any_key():
    img = bytes(0x50000)
    with pytest.raises(NotZlib):
        decrypt_partition(img, Region(0x40000, 0x40008, "z"), b"anykey!!")


def test_misaligned_range(camera):
    with pytest.raises(NotBlockAligned):
        decrypt_partition(camera.image, Region(0x40000, 0x40009, "z"), b"249c6923")


def test_extract_camera_config(camera):
    rec = extract_config(camera.config)
    assert rec.username == "share1"
    assert rec.password_hash == camera.password_hash and len(rec.password_hash) == 32
    assert rec.ip == "192.168.0.108" and rec.protocols == ["rtsp", "onvif", "http"]
    assert rec.ssid == "HOME-7F21" and rec.extras["rtsp_port"] == "554"


def test_extract_empty():
    assert extract_config(b"") == ConfigRecord()


def test_extract_binary_garbage():
    with pytest.raises(TextinessError):
        extract_config(random.Random(1).randbytes(512))


def test_extract_custom_schema():
    rec = extract_config(b"acct = bob\nfoo = bar\n", {"username": r"acct"})
    assert rec.username == "bob" and rec.extras == {"foo": "bar"}


def test_config_record_hash_validation():
    with pytest.raises(ValueError):
        ConfigRecord(password_hash="XYZ")
    rec = ConfigRecord(username="u", password_hash="a" * 40)
    assert ConfigRecord.from_dict(rec.to_dict()) == rec


printable = st.text(st.characters(min_codepoint=0x21, max_codepoint=0x7E, blacklist_characters="=#;\"'"),
                    min_size=1, max_size=20)


@settings(max_examples=40, deadline=None)
@given(user=printable, pw=printable, ip=printable, seed=st.integers(0, 1000))
def test_pipeline_inverse(user, pw, ip, seed):
    text = f"ip = {ip}\nusername = {user}\npassword = {fixtures.hashlib.md5(pw.encode()).hexdigest()}\n"
    blob = fixtures.plant_partition(text.encode(), b"249c6923", seed=seed)
    img = bytes(0x40000) + blob
    assert extract_config(decrypt_partition(img, PARTITION, b"249c6923")) == extract_config(text.encode())


def test_lock_codes(lock):
    seg = read_memory(lock, 0x1000, 256)
    codes = scan_codes(seg, base=0x1000)
    assert codes.programming_code == "539348"
    assert codes.user_codes == ["5370", "2865"]
    assert all(h.encoding == "ascii" for h in codes.hits)


def test_lock_codes_updated():
    seg = read_memory(fixtures.lock_fixture(updated=True), 0x1000, 256)
    codes = scan_codes(seg, base=0x1000)
    assert codes.programming_code == "170712" and "5015" in codes.user_codes


def test_erased_segment():
    codes = scan_codes(b"\xff" * 256)
    assert codes.programming_code is None and codes.user_codes == [] and codes.hits == []


def test_bcd_codes():
    seg = b"\xff\x53\x93\x48\xff\xff\x28\x65\xff" + b"\x00" * 8
    codes = scan_codes(seg)
    assert codes.programming_code == "539348" and codes.user_codes == ["2865"]
    assert {h.encoding for h in codes.hits} == {"bcd"}


def test_ambiguous_programming_code_reported():
    codes = scan_codes(b"\xff123456\xff654321\xff")
    assert codes.programming_code == "123456"
    assert any("ambiguous" in n for n in codes.notes)


def test_segment_too_short():
    with pytest.raises(ValueError):
        scan_codes(b"123")


@settings(max_examples=100)
@given(st.binary(min_size=4, max_size=300))
def test_code_offsets_increase(seg):
    codes = scan_codes(seg)
    offs = codes.offsets
    assert offs == sorted(set(offs))
    for h in codes.hits:
        assert 4 <= len(h.code) <= 8 and h.code.isdigit()
    assert LockCodes.from_dict(codes.to_dict()) == codes
