import json
import zlib

import numpy as np
import pytest

from unattended.carver import (BUILTIN_SIGNATURES, Region, Signature, carve, entropy_profile, find_string,
                               high_entropy_regions, load_signatures, scan_signatures, shannon_entropy,
                               zlib_header_ok)
from unattended.errors import RegionOutOfBounds, WindowTooLarge


def test_fcheck_arithmetic():
    assert 0x7801 % 31 == 0 and zlib_header_ok(0x78, 0x01)
    assert zlib_header_ok(0x78, 0x9C) and zlib_header_ok(0x78, 0xDA)
    assert not zlib_header_ok(0x78, 0x02)
    assert not zlib_header_ok(0x78, 0xBB)  # FDICT set


def test_planted_zlib_found():
    img = bytearray(0x80000)
    stream = zlib.compress(b"hello " * 100)
    img[0x40000:0x40000 + len(stream)] = stream
    regions = scan_signatures(bytes(img))
    assert [(r.start, r.kind) for r in regions] == [(0x40000, "zlib")]


def test_all_zero_image_empty():
    assert scan_signatures(bytes(4096)) == []


def test_minimal_zlib_header_at_7():
    img = bytearray(64)
    img[7:9] = b"\x78\x01"
    assert [(r.start, r.kind) for r in scan_signatures(bytes(img))] == [(7, "zlib")]


def test_region_end_bounds(camera):
    regions = scan_signatures(camera.image)
    uimg = next(r for r in regions if r.kind == "uImage")
    assert (uimg.start, uimg.end) == camera.layout["kernel"]
    sq = next(r for r in regions if r.kind == "squashfs")
    assert (sq.start, sq.end) == camera.layout["rootfs"]


def test_every_zlib_region_passes_fcheck(camera):
    buf = camera.image.data
    for r in scan_signatures(camera.image):
        if r.kind == "zlib":
            assert ((buf[r.start] << 8) | buf[r.start + 1]) % 31 == 0


def test_custom_signature_file(tmp_path):
    path = tmp_path / "sigs.json"
    path.write_text(json.dumps([{"name": "cafe", "magic_hex": "cafe", "mask_hex": "ffff"}]))
    sigs = load_signatures(path)
    assert sigs[0].magic == b"\xca\xfe" and sigs[0].validator == "none"
    regs = scan_signatures(b"\x00\xca\xfe\x00\xca\xfe", sigs)
    assert [(r.start, r.end, r.score) for r in regs] == [(1, 4, 0.75), (4, 6, 0.75)]


def test_signature_validation():
    with pytest.raises(ValueError):
        Signature("x", b"\x01")
    with pytest.raises(ValueError):
        Signature("x", b"\x01\x02", validator="nope")


def test_entropy_extremes():
    assert shannon_entropy(bytes(256)) == 0.0
    assert shannon_entropy(bytes(range(256))) == 8.0
    assert entropy_profile(bytes(range(256)) * 16, window=4096) == [(0, 8.0)]


def test_entropy_permutation_invariant():
    rng = np.random.default_rng(0)
    w = rng.integers(0, 40, 4096, dtype=np.uint8)
    perm = rng.permutation(256).astype(np.uint8)
    assert shannon_entropy(w.tobytes()) == pytest.approx(shannon_entropy(perm[w].tobytes()))


def test_entropy_errors():
    with pytest.raises(WindowTooLarge):
        entropy_profile(bytes(100), window=200)
    with pytest.raises(ValueError):
        entropy_profile(bytes(100), window=8)


def test_encrypted_partition_high_entropy(camera):
    lo, hi = camera.partition
    prof = entropy_profile(carve(camera.image, (lo, hi)))
    assert np.mean([h for _, h in prof]) > 7.5
    regions = high_entropy_regions(camera.image)
    assert any(r.start == lo and r.end == hi for r in regions)


def test_find_string(camera):
    assert find_string(camera.image, "C100 2.0") == [0x700C0]
    assert find_string(camera.image, "C200 1.0") == []
    assert find_string(b"aaa", b"aa") == [0, 1]
    with pytest.raises(ValueError):
        find_string(b"aaa", b"")


def test_carve(camera):
    assert len(carve(camera.image, Region(0x40000, 0x50000, "p"))) == 0x10000
    assert carve(b"abc", (0, 3)) == b"abc"
    with pytest.raises(RegionOutOfBounds):
        carve(camera.image, (0x7FFFF0, 0x800010))


def test_region_invariants():
    with pytest.raises(ValueError):
        Region(5, 5, "x")
    with pytest.raises(ValueError):
        Region(0, 5, "x", score=1.5)


def test_builtin_set_has_five():
    assert {s.name for s in BUILTIN_SIGNATURES} == {"zlib", "gzip", "squashfs", "uImage", "jffs2"}
