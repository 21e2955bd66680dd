"""Durable document store for models, scenarios, reports, and traces.

One JSON document per entry under <kind>/<id>.json, plus a single index.json
mapping ids to metadata.  Traces are stored as CSV next to the reports that
reference them.  Writes go through a tmp-file rename and an in-process lock,
so readers never see a torn document.
"""

from __future__ import annotations

import datetime
import json
import os
import threading
from pathlib import Path

from .documents import dumps, loads, net_from_doc, scenario_from_doc
from .errors import ConflictingId, NotFound, SchemaError
from .rational import json_number

MODELS = "models"
SCENARIOS = "scenarios"
REPORTS = "reports"
TRACES = "traces"
KINDS = (MODELS, SCENARIOS, REPORTS, TRACES)


class Repository:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._index_path = self.root / "index.json"
        if not self._index_path.exists():
            self._write_index({})

    # -- index ----------------------------------------------------------

    def _read_index(self) -> dict:
        return json.loads(self._index_path.read_text(encoding="utf-8"))

    def _write_index(self, index: dict):
        tmp = self._index_path.with_suffix(".json.tmp")
        tmp.write_text(
            json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        os.replace(tmp, self._index_path)

    def _path(self, kind: str, entry_id: str) -> Path:
        if kind not in KINDS:
            raise NotFound(f"unknown kind {kind!r}")
        if "/" in entry_id or entry_id in ("", ".", ".."):
            raise NotFound(f"bad id {entry_id!r}")
        suffix = ".csv" if kind == TRACES else ".json"
        return self.root / kind / f"{entry_id}{suffix}"

    # -- CRUD -------------------------------------------------------------

    def put(self, kind: str, doc, entry_id: str | None = None, tags=()) -> str:
        """Insert a document; validates against its schema first."""
        if kind == MODELS:
            net_from_doc(loads(doc) if isinstance(doc, str) else doc)
        elif kind == SCENARIOS:
            scenario_from_doc(loads(doc) if isinstance(doc, str) else doc)
        elif kind not in (REPORTS, TRACES):
            raise NotFound(f"unknown kind {kind!r}")
        if entry_id is None:
            if kind == TRACES or not isinstance(doc, dict) or "name" not in doc:
                raise SchemaError("$.name", "an explicit id is required")
            entry_id = doc["name"]
        path = self._path(kind, entry_id)
        with self._lock:
            index = self._read_index()
            if entry_id in index:
                raise ConflictingId(f"id {entry_id!r} already stored as {index[entry_id]['kind']}")
            path.parent.mkdir(exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            if kind == TRACES:
                tmp.write_text(doc, encoding="utf-8", newline="")
            else:
                tmp.write_text(dumps(doc) if isinstance(doc, dict) else doc, encoding="utf-8")
            os.replace(tmp, path)
            index[entry_id] = {
                "kind": kind,
                "createdAt": datetime.datetime.now(datetime.timezone.utc).isoformat(),
                "tags": sorted(tags),
            }
            self._write_index(index)
        return entry_id

    def get_text(self, kind: str, entry_id: str) -> str:
        """The stored document verbatim (canonical bytes)."""
        path = self._path(kind, entry_id)
        if not path.exists():
            raise NotFound(f"no {kind[:-1]} {entry_id!r}")
        return path.read_text(encoding="utf-8")

    def get(self, kind: str, entry_id: str):
        text = self.get_text(kind, entry_id)
        if kind == TRACES:
            return text
        return loads(text)

    def delete(self, kind: str, entry_id: str):
        path = self._path(kind, entry_id)
        with self._lock:
            index = self._read_index()
            if entry_id not in index or index[entry_id]["kind"] != kind:
                raise NotFound(f"no {kind[:-1]} {entry_id!r}")
            del index[entry_id]
            if path.exists():
                path.unlink()
            self._write_index(index)

    def list(self, kind: str | None = None) -> list[dict]:
        index = self._read_index()
        entries = [
            {"id": entry_id, **meta}
            for entry_id, meta in index.items()
            if kind is None or meta["kind"] == kind
        ]
        return sorted(entries, key=lambda e: (e["createdAt"], e["id"]))

    def exists(self, kind: str, entry_id: str) -> bool:
        index = self._read_index()
        return entry_id in index and index[entry_id]["kind"] == kind

    # -- domain conveniences ----------------------------------------------

    def get_net(self, entry_id: str):
        return net_from_doc(self.get(MODELS, entry_id))

    def get_scenario(self, entry_id: str):
        return scenario_from_doc(self.get(SCENARIOS, entry_id))

    def net_lookup(self):
        return lambda name: self.get_net(name)

    # -- history ------------------------------------------------------------

    def history(self) -> list[dict]:
        """Everything analyzed or stored, newest last."""
        return self.list()

    def compare(self, entry_ids) -> list[dict]:
        """Side-by-side outcomes of stored analysis reports."""
        rows = []
        for entry_id in entry_ids:
            doc = self.get(REPORTS, entry_id)
            selected = doc.get("selected")
            row = {
                "id": entry_id,
                "deadline": json_number(doc.get("deadline", 0)),
                "stoppedBecause": doc.get("stoppedBecause"),
                "attempts": len(doc.get("attempts", [])),
                "configuration": selected["id"] if selected else None,
                "outcome": None,
                "time": None,
            }
            if selected:
                for attempt in doc["attempts"]:
                    if attempt["configuration"]["id"] == selected["id"]:
                        row["outcome"] = attempt["outcome"]["kind"]
                        when = attempt["outcome"].get("time")
                        row["time"] = None if when is None else json_number(when)
                        break
            rows.append(row)
        return rows
