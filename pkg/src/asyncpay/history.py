"""Invocation/response histories and their line-delimited JSON trace format.

A trace starts with one header record describing the run (process count,
genesis balances, account owners, Byzantine processes) followed by one record
per event. ``kind`` is ``invocation`` or ``response`` for operations of
correct processes, and ``effect`` for a ledger transfer broadcast by a
Byzantine process that correct replicas applied. Effects are not operations
of any correct process; the checker may use them to augment the history.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, TextIO

INVOCATION = "invocation"
RESPONSE = "response"
EFFECT = "effect"


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class HistoryEvent:
    event_id: int
    process: int
    kind: str
    op: str
    op_id: str
    args: dict[str, Any] = field(default_factory=dict)
    payload: Any = None
    byzantine: bool = False


@dataclass
class History:
    n: int
    f: int
    genesis: dict[str, int]
    owners: dict[str, list[int]]
    byzantine: list[int] = field(default_factory=list)
    events: list[HistoryEvent] = field(default_factory=list)

    def add(self, process: int, kind: str, op: str, op_id: str,
            args: dict[str, Any] | None = None, payload: Any = None,
            byzantine: bool = False) -> HistoryEvent:
        ev = HistoryEvent(len(self.events), process, kind, op, op_id,
                          dict(args or {}), payload, byzantine)
        self.events.append(ev)
        return ev

    def by_process(self, process: int) -> list[HistoryEvent]:
        return [e for e in self.events if e.process == process and e.kind != EFFECT]

    def processes(self) -> list[int]:
        return sorted({e.process for e in self.events if e.kind != EFFECT})

    def effects(self) -> list[HistoryEvent]:
        return [e for e in self.events if e.kind == EFFECT]

    def correct_ops(self) -> int:
        return sum(1 for e in self.events if e.kind == INVOCATION and not e.byzantine)

    def well_formed(self) -> bool:
        """Per process, invocations and responses alternate and match."""
        open_ops: dict[int, HistoryEvent] = {}
        for e in self.events:
            if e.kind == INVOCATION:
                if e.process in open_ops:
                    return False
                open_ops[e.process] = e
            elif e.kind == RESPONSE:
                inv = open_ops.pop(e.process, None)
                if inv is None or inv.op_id != e.op_id:
                    return False
        return True

    # -- serialisation -----------------------------------------------------------

    def header(self) -> dict[str, Any]:
        return {"record": "header", "n": self.n, "f": self.f, "genesis": self.genesis,
                "owners": self.owners, "byzantine": self.byzantine}

    def dump(self, out: TextIO) -> None:
        out.write(json.dumps(self.header(), sort_keys=True) + "\n")
        for e in self.events:
            out.write(json.dumps(_jsonable(asdict(e)), sort_keys=True) + "\n")

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            self.dump(fh)

    @classmethod
    def parse(cls, lines: Iterable[str]) -> "History":
        records = []
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise TraceError(f"line {lineno}: {exc}") from exc
        if not records or records[0].get("record") != "header":
            raise TraceError("trace must start with a header record")
        head = records[0]
        try:
            hist = cls(int(head["n"]), int(head["f"]),
                       {k: int(v) for k, v in head["genesis"].items()},
                       {k: [int(p) for p in v] for k, v in head["owners"].items()},
                       [int(p) for p in head.get("byzantine", [])])
            for rec in records[1:]:
                if rec["kind"] not in (INVOCATION, RESPONSE, EFFECT):
                    raise TraceError(f"unknown event kind {rec['kind']!r}")
                hist.events.append(HistoryEvent(
                    int(rec["event_id"]), int(rec["process"]), rec["kind"], rec["op"],
                    rec["op_id"], dict(rec.get("args") or {}), _tupled(rec.get("payload")),
                    bool(rec.get("byzantine", False))))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, TraceError):
                raise
            raise TraceError(f"malformed trace: {exc!r}") from exc
        return hist

    @classmethod
    def load(cls, path: str | Path) -> "History":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _tupled(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value
