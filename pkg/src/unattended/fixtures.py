"""Simulated devices for the two case studies.

The lock is an MSP430-style MCU behind a 7-pin header whose information
memory (0x1000-0x10FF) holds the keypad codes in plain ASCII. The camera is
an 8 MiB SPI flash image whose user-config partition at 0x40000-0x50000 is
zlib-compressed and then DES-ECB encrypted under a key derived from the model
string planted at 0x700c0. Everything here is built forward from the
plaintext, so the analysis tools can be checked against known answers.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import random
import struct
import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .des import des_ecb
from .jtag import JtagTarget, PinHarness, load_target, save_target
from .pinout import MeasurementMatrix
from .pipeline import derive_des_key
from .spi import FlashGeometry, FlashImage

# expected pin-out of header JT1, in header order
JT1_PINOUT = {"JT1.1": "TCK", "JT1.2": "TMS", "JT1.3": "TDI", "JT1.4": "TDO",
          "JT1.5": "GND", "JT1.6": "TRST_N", "JT1.7": "TEST"}
LOCK_WIRING = {"TCK": 1, "TMS": 2, "TDI": 3, "TDO": 4, "GND": 5, "TRST_N": 6, "TEST": 7}
LOCK_IDCODE = 0x2A5B16E5
INFO_MEMORY = (0x1000, 0x1100)

LOCK_CODES = {"programming": "539348", "users": ["5370", "2865"]}
LOCK_CODES_UPDATED = {"programming": "170712", "users": ["5370", "2865", "5015"]}

CAMERA_MODEL = "C100 2.0"
CAMERA_PARTITION = (0x40000, 0x50000)
MODEL_OFFSET = 0x700C0
# what sits where the vendor's reference firmware keeps its key material
STALE_KEY_OFFSET = 0x600C0
STALE_KEY_BYTES = bytes([0x06, 0x68, 0x7A, 0x88, 0xA8, 0xA7, 0x01, 0x97])
CAMERA_USER = "share1"
CAMERA_PASSWORD = "sunflower88"
WORDLIST_SIZE = 10_000


def _data_path(name: str) -> Path:
    return Path(str(resources.files("unattended") / "data" / name))


def jt1_matrix() -> MeasurementMatrix:
    """The diode-mode readings between header JT1 and the MCU's JTAG pins."""
    return MeasurementMatrix.from_csv(_data_path("jt1_diode.csv"))


# lock ---------------------------------------------------------------------

def lock_memory(codes: dict = LOCK_CODES) -> dict:
    """Information-memory contents: NUL-terminated ASCII codes in 16-byte slots, rest erased.

    Slot 0 holds the programming code, later slots the user codes. A slot
    header byte 0xA5 marks it in use; 0xA5 is not a valid BCD byte so it can
    not extend a digit run.
    """
    base, end = INFO_MEMORY
    mem = {a: 0xFF for a in range(base, end)}
    slots = [codes["programming"]] + list(codes["users"])
    for i, code in enumerate(slots):
        addr = base + 16 * i
        rec = b"\xa5" + code.encode() + b"\x00"
        for j, b in enumerate(rec):
            mem[addr + j] = b
    # segment A carries calibration words on real parts; keep a few non-BCD ones
    for j, b in enumerate(bytes.fromhex("fe1a c0ff eeba dbad".replace(" ", ""))):
        mem[end - 8 + j] = b
    return mem


def lock_fixture(updated: bool = False, fuse_blown: bool = False) -> PinHarness:
    codes = LOCK_CODES_UPDATED if updated else LOCK_CODES
    target = JtagTarget(LOCK_IDCODE, ir_length=8, memory=lock_memory(codes), fuse_blown=fuse_blown)
    return PinHarness(target, dict(LOCK_WIRING), pin_count=7)


def load_lock_target(updated: bool = False) -> PinHarness:
    return load_target(_data_path("lock_target_updated.json" if updated else "lock_target.json"))


# camera -------------------------------------------------------------------

def config_text(username: str = CAMERA_USER, password: str = CAMERA_PASSWORD,
                hash_alg: str = "md5") -> bytes:
    digest = hashlib.new(hash_alg, password.encode()).hexdigest()
    return (
        "# user configuration\n"
        "ip = 192.168.0.108\n"
        "netmask = 255.255.255.0\n"
        "protocols = rtsp, onvif, http\n"
        "rtsp_port = 554\n"
        f"username = {username}\n"
        f"password = {digest}\n"
        "ssid = HOME-7F21\n"
        "wifi_security = wpa2-psk\n"
        "timezone = UTC+10:00\n"
    ).encode()


def plant_partition(plaintext: bytes, key: bytes, size: int = CAMERA_PARTITION[1] - CAMERA_PARTITION[0],
                    seed: int = 0) -> bytes:
    """Inverse pipeline: compress, pad with random bytes to ``size``, encrypt."""
    packed = zlib.compress(plaintext, 9)
    if len(packed) > size:
        raise ValueError(f"compressed config ({len(packed)} B) does not fit in {size} B")
    if size % 8:
        raise ValueError("partition size must be a multiple of 8")
    pad = random.Random(seed).randbytes(size - len(packed))
    return des_ecb(packed + pad, key, "encrypt")


def _text_blob(rng: random.Random, n: int) -> bytes:
    words = ("bootargs console ttyS1 57600 mem 64M root mtd rootfstype squashfs init linuxrc "
             "env set flash erase probe spi nor jedec partition kernel rootfs config factory "
             "upgrade version build date loader ready ok error timeout").split()
    out = bytearray()
    while len(out) < n:
        out += " ".join(rng.choice(words) for _ in range(rng.randint(3, 9))).encode() + b"\n"
    return bytes(out[:n])


def _uimage(payload: bytes, name: bytes = b"Linux-3.10.14") -> bytes:
    hdr = bytearray(64)
    struct.pack_into(">IIIIIIIBBBB", hdr, 0, 0x27051956, 0, 1577836800, len(payload),
                     0x80000000, 0x80000000, zlib.crc32(payload), 5, 2, 2, 1)
    hdr[32:32 + len(name)] = name
    struct.pack_into(">I", hdr, 4, zlib.crc32(bytes(hdr)))
    return bytes(hdr) + payload


def _squashfs_super(bytes_used: int) -> bytes:
    sb = bytearray(96)
    struct.pack_into("<4sIIIIHHHHHH", sb, 0, b"hsqs", 412, 1577836800, 131072, 0, 4, 17, 0xC0, 1, 4, 0)
    struct.pack_into("<Q", sb, 40, bytes_used)
    return bytes(sb)


@dataclass
class CameraFixture:
    image: FlashImage
    config: bytes
    username: str
    password: str
    key: bytes
    hash_alg: str = "md5"
    partition: tuple = CAMERA_PARTITION
    model_offset: int = MODEL_OFFSET
    layout: dict = field(default_factory=dict)  # name -> (start, end)

    @property
    def password_hash(self) -> str:
        return hashlib.new(self.hash_alg, self.password.encode()).hexdigest()


def camera_fixture(seed: int = 0, username: str = CAMERA_USER, password: str = CAMERA_PASSWORD,
                   hash_alg: str = "md5", geometry: Optional[FlashGeometry] = None) -> CameraFixture:
    geometry = geometry or FlashGeometry()
    rng = random.Random(seed)
    buf = bytearray(b"\xff" * geometry.capacity_bytes)
    layout = {}

    def put(name, off, blob):
        buf[off:off + len(blob)] = blob
        layout[name] = (off, off + len(blob))

    put("bootloader-strings", 0x00000, _text_blob(rng, 0x20000))
    put("boot-env", 0x30000, _text_blob(rng, 0x4000))
    key = derive_des_key(CAMERA_MODEL)
    cfg = config_text(username, password, hash_alg)
    put("user-config", CAMERA_PARTITION[0], plant_partition(cfg, key, seed=seed))
    put("stale-key-material", STALE_KEY_OFFSET, STALE_KEY_BYTES)
    put("model-string", MODEL_OFFSET, CAMERA_MODEL.encode())
    kernel = gzip.compress(_text_blob(rng, 0x30000), mtime=0)
    put("kernel", 0x100000, _uimage(kernel))
    put("rootfs", 0x300000, _squashfs_super(0x40000) + rng.randbytes(0x40000 - 96))
    return CameraFixture(FlashImage(geometry, bytes(buf)), cfg, username, password, key,
                         hash_alg, CAMERA_PARTITION, MODEL_OFFSET, layout)


_SYLLABLES = ("ka", "lo", "mi", "ne", "ra", "to", "su", "vi", "an", "el", "or", "un", "be",
              "da", "fi", "go", "ha", "jo", "ku", "ly", "mo", "pa", "qu", "si", "te", "wo")


def camera_wordlist(n: int = WORDLIST_SIZE, seed: int = 0, include=(CAMERA_PASSWORD,)) -> list:
    """``n`` distinct password-like words with ``include`` placed at random positions."""
    rng = random.Random(seed)
    words, seen = [], set(include)
    while len(words) < n - len(include):
        w = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 4)))
        if rng.random() < 0.5:
            w += str(rng.randint(0, 99))
        if w not in seen:
            seen.add(w)
            words.append(w)
    for w in include:
        words.insert(rng.randrange(len(words) + 1), w)
    return words


def write_fixtures(outdir) -> dict:
    """Write every fixture file a CLI session needs; returns name -> path."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "matrix": out / "jt1_diode.csv",
        "lock": out / "lock_target.json",
        "lock_updated": out / "lock_target_updated.json",
        "image": out / "cam.bin",
        "wordlist": out / "rockyou-mini.txt",
        "device": out / "cam_device.json",
    }
    paths["matrix"].write_text(jt1_matrix().to_csv())
    save_target(lock_fixture(), paths["lock"])
    save_target(lock_fixture(updated=True), paths["lock_updated"])
    cam = camera_fixture()
    cam.image.save(paths["image"])
    paths["wordlist"].write_text("\n".join(camera_wordlist()) + "\n")
    paths["device"].write_text(json.dumps({"image": paths["image"].name, "bus_contention": False}, indent=2) + "\n")
    return {k: str(v) for k, v in paths.items()}
