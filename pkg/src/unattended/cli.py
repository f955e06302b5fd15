"""Command line front end for both case studies.

Exit status: 0 success, 1 operational error, 2 usage error. ``--json``
switches every subcommand to machine-readable output. When a case directory
is given (``--case`` or ``UNATTENDED_CASE_DIR``) results are also recorded as
evidence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import carver, jtag, pinout, pipeline, rainbow, spi
from .casefile import CaseFile, generate_report
from .errors import UnattendedError

CASE_ENV = "UNATTENDED_CASE_DIR"


class OperationalError(UnattendedError):
    pass


def offset(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an offset: {text!r} (use decimal or 0x hex)") from None
    if v < 0:
        raise argparse.ArgumentTypeError("offsets must be non-negative")
    return v


def byte_range(text: str) -> tuple:
    """``start:end``, end exclusive."""
    try:
        a, b = text.split(":")
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must be start:end, got {text!r}") from None
    start, end = offset(a), offset(b)
    if end <= start:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return start, end


def des_key(text: str) -> bytes:
    """8 characters taken verbatim, or 0x followed by 16 hex digits."""
    if text.lower().startswith("0x") and len(text) == 18:
        try:
            return bytes.fromhex(text[2:])
        except ValueError:
            pass
    if len(text.encode("latin-1", "replace")) == 8:
        return text.encode("latin-1")
    raise argparse.ArgumentTypeError("key must be 8 characters or 0x + 16 hex digits")


def _wiring(text: str) -> dict:
    out = {}
    for part in text.split(","):
        role, _, pin = part.partition("=")
        if role.strip().upper() not in jtag.ROLES or not pin:
            raise argparse.ArgumentTypeError(f"bad wiring entry {part!r}; use ROLE=PIN,...")
        out[role.strip().upper()] = offset(pin)
    return out


def _pins(text: str) -> list:
    out = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(offset(a), offset(b) + 1))
        else:
            out.append(offset(part))
    return out


# helpers ------------------------------------------------------------------

def _case(args, required=False):
    path = _case_path(args)
    if path is None:
        if required:
            raise OperationalError(f"no case directory: pass --case or set {CASE_ENV}")
        return None
    return CaseFile.open(path)


def _record(args, kind, payload, summary, **kw):
    case = _case(args)
    if case is None:
        return None
    return case.record(kind, payload, summary, **kw).id


def _load_image(path, capacity=None) -> spi.FlashImage:
    data = Path(path).read_bytes()
    if capacity is None:
        capacity = len(data)
    try:
        geometry = spi.FlashGeometry(capacity_bytes=capacity)
    except ValueError as exc:
        raise OperationalError(f"{path}: {exc}") from None
    return spi.FlashImage(geometry, data)


def _hex(v: int) -> str:
    return f"0x{v:x}"


# subcommands --------------------------------------------------------------

def cmd_make_fixtures(args):
    from .fixtures import write_fixtures
    paths = write_fixtures(args.out)
    return {"written": paths}, "\n".join(f"{k}: {v}" for k, v in paths.items())


def cmd_case_init(args):
    root = _case_path(args)
    if root is None:
        raise OperationalError(f"case-init needs --case or {CASE_ENV}")
    device = {k: v for k, v in (("model", args.model), ("hardware_version", args.hw_version),
                                ("description", args.description)) if v}
    case = CaseFile.create(root, args.case_id, device)
    return {"case": case.case_id, "path": str(case.root)}, f"created case {case.case_id} at {case.root}"


def _case_path(args):
    root = os.environ.get(CASE_ENV)
    if args.case is None:
        return root
    if root and not Path(args.case).is_absolute():
        return str(Path(root) / args.case)
    return args.case


def cmd_dump(args):
    if args.transcript:
        transcript = spi.Transcript.load(args.transcript)
        driver = spi.ReplayDriver(transcript)
        geometry = spi.FlashGeometry(capacity_bytes=args.capacity or spi.DEFAULT_CAPACITY)
        source = "transcript"
    else:
        conf = {}
        if args.device:
            conf = json.loads(Path(args.device).read_text())
            image_path = Path(args.device).parent / conf["image"]
        elif args.image:
            image_path = Path(args.image)
        else:
            raise OperationalError("dump needs --device, --image or --transcript")
        contention = conf.get("bus_contention", False) or args.bus_contention
        if contention:
            raise OperationalError("bus contention: the SoC is still driving the SPI bus; "
                                   "hold it in reset before dumping")
        img = _load_image(image_path)
        geometry = img.geometry
        jedec = conf.get("jedec_id")
        if jedec:
            geometry = spi.FlashGeometry(img.geometry.capacity_bytes, jedec_id=bytes.fromhex(jedec))
            img = spi.FlashImage(geometry, img.data)
        driver = spi.SimulatedDriver(spi.FlashDevice(img))
        source = "spi-dump"
    t0 = time.perf_counter()
    image, transcript = spi.dump_image(driver, geometry, args.chunk)
    elapsed = time.perf_counter() - t0
    image.save(args.out)
    if args.save_transcript:
        transcript.save(args.save_transcript)
    digest = hashlib.sha256(image.data).hexdigest()
    res = {"out": args.out, "bytes": len(image.data), "transactions": len(transcript),
           "sha256": digest, "seconds": round(elapsed, 3)}
    res["record"] = _record(args, "image", image.data, f"flash dump {len(image.data)} bytes",
                            source=source, meta={"sha256": digest})
    return res, f"dumped {len(image.data)} bytes in {len(transcript)} transactions -> {args.out}"


def cmd_decode_transcript(args):
    transcript = spi.Transcript.load(args.transcript)
    geometry = spi.FlashGeometry(capacity_bytes=args.capacity or spi.DEFAULT_CAPACITY)
    ops = {}
    for tx in transcript:
        name = spi.Opcode(tx.command.opcode).name if tx.command else "unknown"
        ops[name] = ops.get(name, 0) + 1
    res = {"transactions": len(transcript), "opcodes": ops}
    try:
        image, cov = spi.reconstruct_from_transcript(transcript, geometry)
    except UnattendedError:
        if args.out:
            raise
        image, cov = None, None
    if cov is not None:
        res.update(coverage=cov.fraction, covered_bytes=cov.covered_bytes, conflicts=cov.conflicts,
                   ranges=[[_hex(a), _hex(b)] for a, b in cov.ranges()[:64]])
        if args.out:
            image.save(args.out)
            res["out"] = args.out
            res["record"] = _record(args, "image", image.data,
                                    f"image rebuilt from bus transcript, coverage {cov.fraction:.3f}",
                                    source="transcript")
    text = [f"{len(transcript)} transactions: " + ", ".join(f"{k}={v}" for k, v in sorted(ops.items()))]
    if cov is not None:
        text.append(f"coverage {cov.fraction:.6f} ({cov.covered_bytes} bytes), conflicts {cov.conflicts}")
    return res, "\n".join(text)


def cmd_pinout(args):
    m = pinout.MeasurementMatrix.from_csv(Path(args.matrix), ground=args.ground)
    pm = pinout.infer_pinout(m, args.tolerance)
    warnings = pinout.validate_matrix(m, args.tolerance)
    res = {**pm.to_dict(), "warnings": warnings}
    res["record"] = _record(args, "pinmap", pm.to_dict(), "pin-out inferred from continuity matrix")
    text = [f"{p:<8} {s}" for p, s in pm.assignment.items()]
    text += [f"{p:<8} (unassigned)" for p in pm.unassigned]
    text += [f"warning: {w}" for w in warnings]
    return res, "\n".join(text)


def cmd_jtag_enum(args):
    harness = jtag.load_target(args.target)
    pins = args.pins or list(range(1, max(harness.pin_count, 4) + 1))
    t0 = time.perf_counter()
    found = jtag.enumerate_pins(harness, pins)
    elapsed = time.perf_counter() - t0
    res = {"candidates": len(pins), "tried": jtag.count_assignments(len(pins)),
           "assignments": [a.to_dict() for a in found], "seconds": round(elapsed, 3)}
    meta = {"fuse_blown": False} if found else {"jtag_responded": False}
    res["record"] = _record(args, "pinmap", {"assignments": res["assignments"]},
                            f"JTAG enumeration over {len(pins)} pins: {len(found)} hit(s)", meta=meta)
    if not found:
        return res, f"no JTAG TAP found in {res['tried']} assignments"
    return res, "\n".join(f"TCK={a.tck} TMS={a.tms} TDI={a.tdi} TDO={a.tdo} idcode 0x{a.idcode:08x}"
                          for a in found)


def cmd_jtag_read(args):
    harness = jtag.load_target(args.target)
    probe = harness
    if args.wiring:
        # the header is wired as it is; --wiring says where the probe's leads go
        w = args.wiring
        missing = [r for r in ("TCK", "TMS", "TDI", "TDO") if r not in w]
        if missing:
            raise OperationalError(f"--wiring lacks {', '.join(missing)}")
        probe = jtag.Cable(harness, w["TCK"], w["TMS"], w["TDI"], w["TDO"])
    data = jtag.read_memory(probe, args.addr, args.length)
    if args.out:
        Path(args.out).write_bytes(data)
    res = {"addr": _hex(args.addr), "length": len(data), "hex": data.hex(), "out": args.out}
    res["record"] = _record(args, "image", data, f"JTAG read {_hex(args.addr)}+{len(data)}",
                            source="jtag", meta={"fuse_blown": False, "addr": args.addr})
    lines = []
    for i in range(0, len(data), 16):
        chunk = data[i:i + 16]
        asc = "".join(chr(b) if 0x20 <= b < 0x7F else "." for b in chunk)
        lines.append(f"{args.addr + i:04x}  {chunk.hex(' '):<47}  {asc}")
    return res, "\n".join(lines)


def cmd_carve(args):
    img = Path(args.image).read_bytes()
    data = carver.carve(img, args.range)
    Path(args.out).write_bytes(data)
    start, end = args.range
    res = {"start": _hex(start), "end": _hex(end), "bytes": len(data), "out": args.out}
    res["record"] = _record(args, "region", {"start": start, "end": end, "kind": "carved"},
                            f"carved [{_hex(start)}, {_hex(end)})")
    return res, f"carved {len(data)} bytes -> {args.out}"


def cmd_scan(args):
    img = Path(args.image).read_bytes()
    sigs = carver.load_signatures(args.signatures) if args.signatures else carver.BUILTIN_SIGNATURES
    regions = carver.scan_signatures(img, sigs)
    res = {"signatures": [r.to_dict() for r in regions]}
    text = [f"{r.start:#010x}-{r.end:#010x}  {r.kind}" for r in regions]
    if not args.no_entropy:
        window = min(args.window, len(img))
        hi = carver.high_entropy_regions(img, window, args.threshold)
        res["high_entropy"] = [r.to_dict() for r in hi]
        text += [f"{r.start:#010x}-{r.end:#010x}  high-entropy ({r.score * 8:.2f} bits/byte)" for r in hi]
    if args.find:
        res["strings"] = {s: carver.find_string(img, s) for s in args.find}
        for s, offs in res["strings"].items():
            text.append(f"{s!r}: " + (", ".join(f"{o:#x}" for o in offs) or "not found"))
    res["record"] = _record(args, "region", {k: v for k, v in res.items() if k != "record"},
                            f"scan: {len(regions)} signature hits, "
                            f"{len(res.get('high_entropy', []))} high-entropy regions")
    return res, "\n".join(text)


def cmd_derive_key(args):
    derivation = args.derivation
    if args.registry:
        derivation = pipeline.load_key_registry(args.registry, name=args.derivation)
    key = pipeline.derive_des_key(args.model, derivation)
    res = {"model": args.model, "key_text": key.decode("latin-1"), "key_hex": "0x" + key.hex()}
    return res, f"{res['key_text']}  ({res['key_hex']})"


def cmd_decrypt(args):
    if (args.key is None) == (args.model is None):
        raise OperationalError("give exactly one of --key or --model")
    key = args.key if args.key is not None else pipeline.derive_des_key(args.model)
    img = Path(args.image).read_bytes()
    start, end = args.range
    region = carver.Region(start, end, "partition")
    plain = pipeline.decrypt_partition(img, region, key, strict=not args.lenient)
    if args.out:
        Path(args.out).write_bytes(plain)
    res = {"range": [_hex(start), _hex(end)], "key_hex": "0x" + key.hex(), "bytes": len(plain),
           "out": args.out}
    res["record"] = _record(args, "region", {"start": start, "end": end, "kind": "decrypted",
                                             "key_hex": key.hex(), "plaintext_bytes": len(plain)},
                            f"partition [{_hex(start)}, {_hex(end)}) decrypted")
    if args.out:
        return res, f"decrypted {len(plain)} bytes -> {args.out}"
    return res, plain.decode("latin-1")


def cmd_extract_config(args):
    data = Path(args.input).read_bytes()
    schema = json.loads(Path(args.schema).read_text()) if args.schema else None
    rec = pipeline.extract_config(data, schema)
    res = rec.to_dict()
    res["record"] = _record(args, "config", rec.to_dict(),
                            f"config: user {rec.username}, hash {'yes' if rec.password_hash else 'no'}")
    return res, json.dumps(rec.to_dict(), indent=2)


def cmd_scan_codes(args):
    data = Path(args.input).read_bytes()
    codes = pipeline.scan_codes(data, args.base)
    res = codes.to_dict()
    res["record"] = _record(args, "codes", codes.to_dict(),
                            f"codes: programming {codes.programming_code}, {len(codes.user_codes)} user",
                            meta={"fuse_blown": False})
    text = [f"programming code: {codes.programming_code or '-'}",
            f"user codes: {', '.join(codes.user_codes) or '-'}"]
    text += [f"  {h.offset:#06x}  {h.code}  ({h.encoding})" for h in codes.hits]
    text += [f"note: {n}" for n in codes.notes]
    return res, "\n".join(text)


def cmd_table_build(args):
    params = rainbow.TableParams(args.hash_alg, args.charset, args.min_len, args.max_len,
                                 args.chain_len, args.chain_count, args.seed, args.table_index)
    t0 = time.perf_counter()
    tables = rainbow.build_table_set(params, args.count)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    paths = [out] if args.count == 1 else [out.with_name(f"{out.stem}.{i}{out.suffix}")
                                           for i in range(args.count)]
    for tb, p in zip(tables, paths):
        tb.save(p)
    res = {"tables": [{"path": str(p), "rows": len(tb), "duplicates_removed": tb.duplicates_removed,
                       "table_index": tb.params.table_index} for tb, p in zip(tables, paths)],
           "space": params.space_size, "seconds": round(elapsed, 3)}
    return res, "\n".join(f"{d['path']}: {d['rows']} rows ({d['duplicates_removed']} merged chains dropped)"
                          for d in res["tables"])


def cmd_crack(args):
    if bool(args.wordlist) == bool(args.table):
        raise OperationalError("give exactly one of --wordlist or --table")
    h = args.hash.lower()
    if args.wordlist:
        result = rainbow.dictionary_attack(rainbow.load_wordlist(args.wordlist), h, args.hash_alg)
    else:
        tables = [rainbow.RainbowTable.load(p) for p in args.table]
        result = rainbow.lookup(tables, h)
    payload = result.to_dict()
    if args.username:
        payload["username"] = args.username
    payload["record"] = _record(args, "crack", {k: v for k, v in payload.items() if k != "record"},
                                f"{result.method} attack on {h[:12]}...: "
                                f"{'found' if result.found else 'not found'}")
    return payload, result.plaintext if result.found else "not found"


def cmd_report(args):
    case = _case(args, required=True)
    text = generate_report(case, args.format, args.reproducible)
    if args.out:
        Path(args.out).write_text(text)
    return {"report": text, "out": args.out}, text.rstrip("\n")


# parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unattended", description=__doc__.splitlines()[0])
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--case", help=f"case directory for evidence (relative to ${CASE_ENV} if set)")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help, description=help)
        sp.set_defaults(func=fn)
        return sp

    sp = add("make-fixtures", cmd_make_fixtures, "write the simulated lock and camera fixtures")
    sp.add_argument("--out", required=True)

    sp = add("case-init", cmd_case_init, "create a case directory")
    sp.add_argument("--case-id")
    sp.add_argument("--model")
    sp.add_argument("--hw-version")
    sp.add_argument("--description")

    sp = add("dump", cmd_dump, "dump a (simulated) SPI flash to an image file")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--device", help="device JSON {image, bus_contention, jedec_id}")
    src.add_argument("--image", help="raw image backing the simulated chip")
    src.add_argument("--transcript", help="replay a recorded bus transcript")
    sp.add_argument("--out", required=True)
    sp.add_argument("--chunk", type=offset, default=4096)
    sp.add_argument("--capacity", type=offset)
    sp.add_argument("--bus-contention", action="store_true", help="simulate the SoC still running")
    sp.add_argument("--save-transcript")

    sp = add("decode-transcript", cmd_decode_transcript, "decode a bus transcript and rebuild the image")
    sp.add_argument("--transcript", required=True)
    sp.add_argument("--capacity", type=offset)
    sp.add_argument("--out")

    sp = add("pinout", cmd_pinout, "infer header pin-out from a continuity matrix CSV")
    sp.add_argument("--matrix", required=True)
    sp.add_argument("--tolerance", type=float, default=pinout.DEFAULT_TOLERANCE_MV)
    sp.add_argument("--ground", default="GND")

    sp = add("jtag-enum", cmd_jtag_enum, "brute-force JTAG pin assignments")
    sp.add_argument("--target", required=True, help="target definition JSON")
    sp.add_argument("--pins", type=_pins, help="candidate pins, e.g. 1-7 or 1,2,5")

    sp = add("jtag-read", cmd_jtag_read, "read target memory over JTAG")
    sp.add_argument("addr", type=offset)
    sp.add_argument("length", type=offset)
    sp.add_argument("--target", required=True)
    sp.add_argument("--wiring", type=_wiring,
                    help="probe leads as TCK=1,TMS=2,TDI=3,TDO=4 (default: the target file's wiring)")
    sp.add_argument("--out")

    sp = add("carve", cmd_carve, "copy a byte range out of an image")
    sp.add_argument("--image", required=True)
    sp.add_argument("--range", type=byte_range, required=True)
    sp.add_argument("--out", required=True)

    sp = add("scan", cmd_scan, "signature, entropy and string scan of an image")
    sp.add_argument("--image", required=True)
    sp.add_argument("--signatures")
    sp.add_argument("--window", type=offset, default=carver.DEFAULT_WINDOW)
    sp.add_argument("--threshold", type=float, default=carver.HIGH_ENTROPY_BITS)
    sp.add_argument("--no-entropy", action="store_true")
    sp.add_argument("--find", action="append", help="string to locate (repeatable)")

    sp = add("derive-key", cmd_derive_key, "derive the partition DES key from a model string")
    sp.add_argument("--model", required=True)
    sp.add_argument("--derivation", default="lookup")
    sp.add_argument("--registry", help="JSON map model -> 8-char key")

    sp = add("decrypt", cmd_decrypt, "DES-ECB decrypt and inflate a partition")
    sp.add_argument("--image", required=True)
    sp.add_argument("--range", type=byte_range, required=True)
    sp.add_argument("--model")
    sp.add_argument("--key", type=des_key)
    sp.add_argument("--out")
    sp.add_argument("--lenient", action="store_true", help="accept any valid zlib window size")

    sp = add("extract-config", cmd_extract_config, "parse a decrypted config into a record")
    sp.add_argument("--input", required=True)
    sp.add_argument("--schema", help="JSON map field -> key regex")

    sp = add("scan-codes", cmd_scan_codes, "find numeric lock codes in a memory segment")
    sp.add_argument("--input", required=True)
    sp.add_argument("--base", type=offset, default=0)

    sp = add("table-build", cmd_table_build, "build rainbow table(s)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--hash-alg", default="md5", choices=sorted(rainbow.HASH_ALGS))
    sp.add_argument("--charset", default=rainbow.DEFAULT_CHARSET)
    sp.add_argument("--min-len", type=int, default=1)
    sp.add_argument("--max-len", type=int, default=4)
    sp.add_argument("--chain-len", type=int, default=100)
    sp.add_argument("--chain-count", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--table-index", type=int, default=0)
    sp.add_argument("--count", type=int, default=1, help="number of tables with consecutive indices")

    sp = add("crack", cmd_crack, "reverse a password hash")
    sp.add_argument("--hash", required=True)
    sp.add_argument("--wordlist")
    sp.add_argument("--table", action="append")
    sp.add_argument("--hash-alg", default="md5", choices=sorted(rainbow.HASH_ALGS))
    sp.add_argument("--username", help="account the hash belongs to (for the report)")

    sp = add("report", cmd_report, "render the case report")
    sp.add_argument("--format", choices=("text", "md"), default="text")
    sp.add_argument("--reproducible", action="store_true", help="normalize timestamps")
    sp.add_argument("--out")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        result, text = args.func(args)
    except (UnattendedError, OSError, ValueError, KeyError) as exc:
        msg = f"{type(exc).__name__}: {exc}"
        if args.json:
            print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        else:
            print(f"unattended {args.command}: {msg}", file=sys.stderr)
        return 1
    if args.json:
        print(json.dumps(result, indent=2, default=str))
    elif isinstance(text, str):
        sys.stdout.write(text + ("" if text.endswith("\n") else "\n"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
