"""File tailer: reads new complete lines, tracks offsets, frames batches.

Delivery is at-least-once: the registry is checkpointed atomically after a
batch has been handed downstream, so a crash replays at most the records
shipped since the last checkpoint. Downstream document ids are derived from
(source, offset, line), which makes the replay idempotent.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import NamedTuple

from .codecs import LogKind, classify_file


class ShipperError(Exception):
    pass


class RegistryCorrupt(ShipperError):
    pass


class FrameError(ShipperError):
    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"frame line {position}: {message}")
        self.position = position


@dataclass(frozen=True)
class RegistryEntry:
    offset: int
    identity: tuple[int, int]
    last_read: int


@dataclass(frozen=True)
class TailRegistry:
    entries: dict[str, RegistryEntry] = field(default_factory=dict)


class RawRecord(NamedTuple):
    line: str
    source: str
    offset: int
    beat_name: str
    doc_type: str
    kind: LogKind


@dataclass(frozen=True)
class Batch:
    records: tuple[RawRecord, ...]
    batch_id: int


def tail_once(
    registry: TailRegistry,
    path: str,
    max_records: int,
    beat_name: str = "beat-local",
    batch_id: int = 0,
) -> tuple[Batch, TailRegistry]:
    """Read up to `max_records` new complete lines from `path`.

    A partial trailing line stays unread. Rotation (changed file identity)
    or truncation (size below the stored offset) resets the offset to zero
    so the replacement file ships from its start.
    """
    st = os.stat(path)
    identity = (st.st_dev, st.st_ino)
    entry = registry.entries.get(path)
    offset = 0
    if entry is not None and entry.identity == identity and st.st_size >= entry.offset:
        offset = entry.offset

    kind = classify_file(path)
    records: list[RawRecord] = []
    consumed = 0
    with open(path, "rb") as handle:
        handle.seek(offset)
        budget = max(1 << 16, 512 * max_records)
        data = handle.read(budget)
        newlines = data.count(b"\n")
        while newlines < max_records:
            more = handle.read(budget)
            if not more:
                break
            newlines += more.count(b"\n")
            data += more
        end = data.rfind(b"\n")
        if end >= 0:
            start = 0
            for raw in data[: end + 1].split(b"\n")[:-1]:
                if len(records) >= max_records:
                    break
                records.append(
                    RawRecord(
                        line=raw.decode("utf-8", errors="replace"),
                        source=path,
                        offset=offset + start,
                        beat_name=beat_name,
                        doc_type="log",
                        kind=kind,
                    )
                )
                start += len(raw) + 1
            consumed = start

    new_entry = RegistryEntry(
        offset=offset + consumed,
        identity=identity,
        last_read=int(time.time() * 1000),
    )
    entries = dict(registry.entries)
    if records or entry is None or entry.identity != identity or entry.offset != new_entry.offset:
        entries[path] = new_entry
        new_registry = TailRegistry(entries)
    else:
        new_registry = registry
    return Batch(records=tuple(records), batch_id=batch_id), new_registry


def checkpoint(registry: TailRegistry, store: str) -> None:
    """Persist the registry atomically (write-temp, fsync, rename)."""
    payload = {
        path: {
            "offset": e.offset,
            "device": e.identity[0],
            "inode": e.identity[1],
            "last_read": e.last_read,
        }
        for path, e in sorted(registry.entries.items())
    }
    tmp = f"{store}.tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=0, sort_keys=True)
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(tmp, store)


def load_registry(store: str) -> TailRegistry:
    """Load a checkpointed registry; a missing file is an empty registry."""
    if not os.path.exists(store):
        return TailRegistry()
    try:
        with open(store, encoding="utf-8") as handle:
            payload = json.load(handle)
        entries = {
            path: RegistryEntry(
                offset=int(item["offset"]),
                identity=(int(item["device"]), int(item["inode"])),
                last_read=int(item["last_read"]),
            )
            for path, item in payload.items()
        }
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise RegistryCorrupt(f"cannot load registry {store!r}: {exc}") from exc
    return TailRegistry(entries)


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def frame_batch(batch: Batch) -> bytes:
    """Serialize a batch as one header line plus one line per record."""
    lines = [_dump({"batch_id": batch.batch_id, "count": len(batch.records)})]
    for r in batch.records:
        lines.append(
            _dump(
                {
                    "line": r.line,
                    "source": r.source,
                    "offset": r.offset,
                    "beat.name": r.beat_name,
                    "type": r.doc_type,
                    "kind": r.kind.value,
                }
            )
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def unframe_batch(payload: bytes) -> Batch:
    """Inverse of frame_batch; malformed input reports the frame line."""
    text = payload.decode("utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FrameError("empty frame", 0)

    def parse(pos: int, line: str) -> dict:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FrameError(f"bad JSON: {exc}", pos) from exc
        if not isinstance(obj, dict):
            raise FrameError("expected an object", pos)
        return obj

    header = parse(0, lines[0])
    try:
        batch_id = int(header["batch_id"])
        count = int(header["count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FrameError(f"bad header: {exc}", 0) from exc
    if count != len(lines) - 1:
        raise FrameError(f"header count {count} != {len(lines) - 1} records", 0)

    records = []
    for pos, line in enumerate(lines[1:], start=1):
        obj = parse(pos, line)
        try:
            records.append(
                RawRecord(
                    line=obj["line"],
                    source=obj["source"],
                    offset=int(obj["offset"]),
                    beat_name=obj["beat.name"],
                    doc_type=obj["type"],
                    kind=LogKind(obj["kind"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FrameError(f"bad record: {exc}", pos) from exc
    return Batch(records=tuple(records), batch_id=batch_id)


class Shipper:
    """Stateful wrapper owning one registry and a per-shipper batch counter."""

    def __init__(
        self,
        registry_path: str,
        beat_name: str = "beat-local",
        batch_size: int = 2000,
    ) -> None:
        self.registry_path = registry_path
        self.beat_name = beat_name
        self.batch_size = batch_size
        self.registry = load_registry(registry_path)
        self._next_batch_id = 0

    def poll(self, path: str) -> Batch:
        batch, self.registry = tail_once(
            self.registry,
            path,
            self.batch_size,
            beat_name=self.beat_name,
            batch_id=self._next_batch_id,
        )
        if batch.records:
            self._next_batch_id += 1
        return batch

    def checkpoint(self) -> None:
        checkpoint(self.registry, self.registry_path)
