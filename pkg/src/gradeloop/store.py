"""Embedded single-node document store with optimistic versioning.

Writes append to a JSONL log; ``snapshot()`` compacts the log into a
snapshot file. Every write carries an audit entry (actor, action,
timestamp), kept separate from entity payloads so exports stay
deterministic. A networked database could substitute behind the same
interface.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping

from .errors import UnknownEntity, VersionConflict

SNAPSHOT_EVERY = 1000


@dataclass(frozen=True)
class StoreRecord:
    kind: str
    id: str
    version: int
    payload: dict[str, Any]


class DocumentStore:
    """In-memory map of (kind, id) -> versioned payload, optionally file-backed."""

    def __init__(self, path: str | Path | None = None, now: Callable[[], float] = time.time):
        self._lock = threading.RLock()
        self._records: dict[tuple[str, str], StoreRecord] = {}
        self._audit: list[dict[str, Any]] = []
        self._seq = 0
        self._now = now
        self._dir = Path(path) if path is not None else None
        self._log_handle = None
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)
            self._load()
            self._log_handle = open(self._log_path, "a", encoding="utf-8")

    @property
    def _log_path(self) -> Path:
        assert self._dir is not None
        return self._dir / "log.jsonl"

    @property
    def _snapshot_path(self) -> Path:
        assert self._dir is not None
        return self._dir / "snapshot.json"

    def _load(self) -> None:
        if self._snapshot_path.exists():
            snapshot = json.loads(self._snapshot_path.read_text(encoding="utf-8"))
            for entry in snapshot["records"]:
                record = StoreRecord(entry["kind"], entry["id"], entry["version"], entry["payload"])
                self._records[(record.kind, record.id)] = record
            self._audit = snapshot["audit"]
            self._seq = snapshot["seq"]
        if self._log_path.exists():
            with open(self._log_path, encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    entry = json.loads(line)
                    if entry["seq"] <= self._seq:
                        continue
                    record = StoreRecord(
                        entry["kind"], entry["id"], entry["version"], entry["payload"]
                    )
                    self._records[(record.kind, record.id)] = record
                    self._audit.append(
                        {k: entry[k] for k in ("seq", "kind", "id", "version", "actor", "action", "ts")}
                    )
                    self._seq = entry["seq"]

    def put(
        self,
        kind: str,
        entity_id: str,
        payload: Mapping[str, Any],
        expected_version: int | None = None,
        actor: str = "system",
        action: str = "put",
    ) -> StoreRecord:
        """Write a payload; ``expected_version`` enforces optimistic concurrency.

        ``None`` upserts unconditionally (internal writers); ``0`` requires
        the entity not to exist yet; any other value must equal the current
        version or the write is rejected.
        """
        with self._lock:
            current = self._records.get((kind, entity_id))
            current_version = current.version if current else 0
            if expected_version is not None and expected_version != current_version:
                raise VersionConflict(
                    f"{kind}/{entity_id}: expected version {expected_version},"
                    f" found {current_version}"
                )
            record = StoreRecord(kind, entity_id, current_version + 1, dict(payload))
            self._records[(kind, entity_id)] = record
            self._seq += 1
            audit_entry = {
                "seq": self._seq,
                "kind": kind,
                "id": entity_id,
                "version": record.version,
                "actor": actor,
                "action": action,
                "ts": self._now(),
            }
            self._audit.append(audit_entry)
            if self._log_handle is not None:
                self._log_handle.write(
                    json.dumps({**audit_entry, "payload": record.payload}) + "\n"
                )
                self._log_handle.flush()
                if self._seq % SNAPSHOT_EVERY == 0:
                    self._write_snapshot()
            return record

    def get(self, kind: str, entity_id: str) -> StoreRecord:
        with self._lock:
            record = self._records.get((kind, entity_id))
        if record is None:
            raise UnknownEntity(f"{kind}/{entity_id} not found")
        return record

    def try_get(self, kind: str, entity_id: str) -> StoreRecord | None:
        with self._lock:
            return self._records.get((kind, entity_id))

    def list(self, kind: str) -> list[StoreRecord]:
        with self._lock:
            records = [r for (k, _), r in self._records.items() if k == kind]
        return sorted(records, key=lambda r: r.id)

    def iter_audit(self, entity_id: str | None = None) -> Iterator[dict[str, Any]]:
        with self._lock:
            entries = list(self._audit)
        for entry in entries:
            if entity_id is None or entry["id"] == entity_id:
                yield entry

    def _write_snapshot(self) -> None:
        snapshot = {
            "seq": self._seq,
            "records": [
                {"kind": r.kind, "id": r.id, "version": r.version, "payload": r.payload}
                for r in sorted(self._records.values(), key=lambda r: (r.kind, r.id))
            ],
            "audit": self._audit,
        }
        tmp = self._snapshot_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(snapshot), encoding="utf-8")
        tmp.replace(self._snapshot_path)
        if self._log_handle is not None:
            self._log_handle.truncate(0)
            self._log_handle.seek(0)

    def snapshot(self) -> None:
        with self._lock:
            if self._dir is not None:
                self._write_snapshot()

    def close(self) -> None:
        with self._lock:
            if self._log_handle is not None:
                self._write_snapshot()
                self._log_handle.close()
                self._log_handle = None
