"""Evidence store and attack report.

A case is a directory: ``case.json`` lists the records in order, and every
payload lives once in ``blobs/<sha256>``. Records are append-only.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Union

from .errors import DuplicateRecord, NothingToReport, PersistError

SOURCES = ("jtag", "spi-dump", "transcript", "pipeline")
KINDS = ("image", "region", "pinmap", "config", "codes", "crack")
DEFAULT_SOURCE = {"image": "spi-dump", "region": "pipeline", "pinmap": "jtag",
                  "config": "pipeline", "codes": "jtag", "crack": "pipeline"}
CASE_FILE = "case.json"
FORMAT_VERSION = 1


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _encode(payload) -> tuple:
    if isinstance(payload, (bytes, bytearray, memoryview)):
        return bytes(payload), "binary"
    if hasattr(payload, "to_dict"):
        payload = payload.to_dict()
    return json.dumps(payload, sort_keys=True, indent=1).encode() + b"\n", "json"


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


@dataclass(frozen=True)
class EvidenceRecord:
    id: str
    created_at: str
    source: str
    kind: str
    payload_digest: str
    summary: str
    payload_path: str
    media: str = "json"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")

    def to_dict(self) -> dict:
        return asdict(self)


class CaseFile:
    def __init__(self, root, case_id: str, device: Optional[dict] = None,
                 records=(), clock: Callable[[], str] = _now):
        self.root = Path(root)
        self.case_id = case_id
        self.device = dict(device or {})
        self._records = list(records)
        self.clock = clock

    @property
    def records(self) -> tuple:
        return tuple(self._records)

    @classmethod
    def create(cls, root, case_id: Optional[str] = None, device: Optional[dict] = None,
               clock: Callable[[], str] = _now) -> "CaseFile":
        root = Path(root)
        if (root / CASE_FILE).exists():
            raise PersistError(f"{root} already holds a case")
        case = cls(root, case_id or root.name, device, clock=clock)
        case.save()
        return case

    @classmethod
    def load(cls, root, clock: Callable[[], str] = _now) -> "CaseFile":
        root = Path(root)
        try:
            d = json.loads((root / CASE_FILE).read_text())
        except (OSError, ValueError) as exc:
            raise PersistError(f"cannot read case at {root}: {exc}") from exc
        records = [EvidenceRecord(**r) for r in d.get("records", [])]
        ids = [r.id for r in records]
        if len(set(ids)) != len(ids):
            raise PersistError("case.json contains duplicate record ids")
        return cls(root, d["case_id"], d.get("device", {}), records, clock)

    @classmethod
    def open(cls, root, clock: Callable[[], str] = _now, **create_kw) -> "CaseFile":
        """Load the case at ``root``, creating an empty one if none exists."""
        if (Path(root) / CASE_FILE).exists():
            return cls.load(root, clock)
        return cls.create(root, clock=clock, **create_kw)

    def to_dict(self) -> dict:
        return {"format": FORMAT_VERSION, "case_id": self.case_id, "device": self.device,
                "records": [r.to_dict() for r in self._records]}

    def save(self) -> None:
        try:
            (self.root / "blobs").mkdir(parents=True, exist_ok=True)
            data = json.dumps(self.to_dict(), indent=2, sort_keys=True).encode() + b"\n"
            _atomic_write(self.root / CASE_FILE, data)
        except OSError as exc:
            raise PersistError(f"cannot write case at {self.root}: {exc}") from exc

    def record(self, kind: str, payload, summary: str, source: Optional[str] = None,
               id: Optional[str] = None, meta: Optional[dict] = None) -> EvidenceRecord:
        """Persist ``payload`` (bytes, or anything JSON-serializable) and append a record."""
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        data, media = _encode(payload)
        digest = _digest(data)
        rid = id or f"{kind}-{len(self._records) + 1:03d}"
        if any(r.id == rid for r in self._records):
            raise DuplicateRecord(f"record id {rid!r} already in case")
        rec = EvidenceRecord(rid, self.clock(), source or DEFAULT_SOURCE[kind], kind, digest,
                             summary, f"blobs/{digest}", media, dict(meta or {}))
        blob = self.root / rec.payload_path
        try:
            blob.parent.mkdir(parents=True, exist_ok=True)
            if not blob.exists():
                _atomic_write(blob, data)
        except OSError as exc:
            raise PersistError(f"cannot store payload: {exc}") from exc
        self._records.append(rec)
        self.save()
        return rec

    def get(self, rid: str) -> EvidenceRecord:
        for r in self._records:
            if r.id == rid:
                return r
        raise KeyError(rid)

    def payload_bytes(self, rec: Union[str, EvidenceRecord]) -> bytes:
        rec = self.get(rec) if isinstance(rec, str) else rec
        try:
            return (self.root / rec.payload_path).read_bytes()
        except OSError as exc:
            raise PersistError(f"payload of {rec.id} missing: {exc}") from exc

    def payload(self, rec: Union[str, EvidenceRecord]):
        rec = self.get(rec) if isinstance(rec, str) else rec
        data = self.payload_bytes(rec)
        return json.loads(data) if rec.media == "json" else data

    def verify(self) -> list:
        """Ids of records whose stored payload no longer matches its digest."""
        bad = []
        for r in self._records:
            try:
                ok = _digest(self.payload_bytes(r)) == r.payload_digest
            except PersistError:
                ok = False
            if not ok:
                bad.append(r.id)
        return bad


# report -------------------------------------------------------------------

FUSE_ADVICE = ("blow the JTAG security fuse (6 V, 100 mA pulse on the TEST pin) "
               "before shipping, and change the default programming code")
KEY_ADVICE = "derive the partition key from per-device secret material, not the model string"
SALT_ADVICE = "store passwords as salted hashes (random per-user salt) so precomputed tables do not apply"


def _findings(case: CaseFile) -> list:
    out = []
    for r in case.records:
        p = case.payload(r) if r.media == "json" else None
        ref = f"[{r.id}]"
        if r.kind == "codes" and p:
            if p.get("programming_code"):
                out.append(f"programming code {p['programming_code']} {ref}")
            for c in p.get("user_codes", []):
                out.append(f"user code {c} {ref}")
        elif r.kind == "config" and p:
            for k in ("ip", "username", "ssid"):
                if p.get(k):
                    out.append(f"config {k}: {p[k]} {ref}")
            if p.get("protocols"):
                out.append(f"config protocols: {', '.join(p['protocols'])} {ref}")
            if p.get("password_hash"):
                out.append(f"config password hash: {p['password_hash']} {ref}")
        elif r.kind == "crack" and p:
            who = f"{p['username']} / " if p.get("username") else ""
            if p.get("plaintext") is not None:
                out.append(f"credential recovered: {who}{p['plaintext']} "
                           f"({p.get('hash_alg', 'md5')}, {p['method']}, {p['work']} hashes) {ref}")
            else:
                out.append(f"hash {p['hash']} not reversed ({p['method']}, {p['work']} hashes) {ref}")
        elif r.kind == "pinmap" and p:
            pairs = p.get("assignment") or {}
            if pairs:
                out.append("header pin-out: " + ", ".join(f"{k}={v}" for k, v in pairs.items()) + f" {ref}")
            for a in p.get("assignments", []):
                out.append(f"JTAG responds on TCK={a['TCK']} TMS={a['TMS']} TDI={a['TDI']} "
                           f"TDO={a['TDO']} idcode {a['idcode']} {ref}")
        else:
            out.append(f"{r.kind}: {r.summary} {ref}")
    return out


def _mitigations(case: CaseFile) -> list:
    recs = case.records
    jtag = [r for r in recs if r.source == "jtag"]
    fuse = [r.meta["fuse_blown"] for r in jtag if "fuse_blown" in r.meta]
    if any(f is False for f in fuse) or any(r.kind == "codes" for r in jtag):
        fuse_line = f"fuse_blown: false => JTAG open; {FUSE_ADVICE}"
    elif fuse and all(fuse):
        fuse_line = "fuse_blown: true => JTAG closed"
    elif any(r.meta.get("jtag_responded") is False for r in jtag):
        fuse_line = "fuse_blown: likely (no TAP answered on any pin assignment) => JTAG closed"
    else:
        fuse_line = "fuse status: not assessed"

    has_config = any(r.kind == "config" for r in recs)
    has_region = any(r.kind == "region" for r in recs)
    if has_config:
        enc_line = f"partition encryption: broken (config decrypted); {KEY_ADVICE}"
    elif has_region:
        enc_line = "partition encryption: intact (partition located, not decrypted)"
    else:
        enc_line = "partition encryption: not assessed"

    cracks = [case.payload(r) for r in recs if r.kind == "crack" and r.media == "json"]
    if any(c.get("plaintext") is not None for c in cracks):
        salt_line = f"salting: absent (unsalted hash reversed); {SALT_ADVICE}"
    elif cracks:
        salt_line = f"salting: unknown (hash not reversed); {SALT_ADVICE}"
    elif has_config:
        salt_line = f"salting: absent (bare digest in config); {SALT_ADVICE}"
    else:
        salt_line = "salting: not assessed"
    return [fuse_line, enc_line, salt_line]


def report_data(case: CaseFile, reproducible: bool = False) -> dict:
    if not case.records:
        raise NothingToReport(f"case {case.case_id!r} has no evidence records")
    timeline = []
    for i, r in enumerate(case.records, 1):
        when = f"step {i:02d}" if reproducible else r.created_at
        timeline.append(f"{when}  {r.source}/{r.kind}  {r.summary} [{r.id}]")
    data = {
        "case": case.case_id,
        "device": {k: case.device[k] for k in sorted(case.device)},
        "timeline": timeline,
        "findings": _findings(case),
        "mitigations": _mitigations(case),
    }
    if not reproducible:
        data["generated_at"] = case.clock()
    return data


def generate_report(case: CaseFile, fmt: str = "text", reproducible: bool = False) -> str:
    """Device, timeline, findings and mitigations as plain text or Markdown."""
    if fmt not in ("text", "md"):
        raise ValueError("fmt must be 'text' or 'md'")
    d = report_data(case, reproducible)
    device = [f"{k}: {v}" for k, v in d["device"].items()] or ["(not described)"]
    sections = [("Device", device), ("Timeline", d["timeline"]),
                ("Findings", d["findings"] or ["none"]), ("Mitigations", d["mitigations"])]
    lines = []
    if fmt == "md":
        lines.append(f"# Case {d['case']}")
        if "generated_at" in d:
            lines.append(f"\n_generated {d['generated_at']}_")
        for title, items in sections:
            lines.append(f"\n## {title}\n")
            lines.extend(f"- {x}" for x in items)
    else:
        lines.append(f"CASE {d['case']}")
        if "generated_at" in d:
            lines.append(f"generated {d['generated_at']}")
        for title, items in sections:
            lines.append("")
            lines.append(title.upper())
            lines.extend(f"  {x}" for x in items)
    return "\n".join(lines) + "\n"
