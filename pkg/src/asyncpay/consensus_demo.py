"""Two-process consensus from an atomic payment channel object.

Both processes share an asset-transfer object ``A`` (accounts ``a`` and ``b``,
both 0), a channel ``(a, b)`` that starts open with balances (1, 1), and
registers ``R1`` and ``R2``. p1 owns ``a`` and p2 owns ``b``::

    p1: R1.write(v); transfer((a,b), 1); close with own balance 0; decide
    p2: R2.write(v); close with own balance 1;                   decide
    decide: wait until A.read(b) != 0; return R1 if A.read(b) == 2 else R2

With the bidirectional channel both closes are the symmetric ``close``; with
the unidirectional one p1 uses ``source_close`` and p2 ``target_close``.
Every step is one atomic object operation. :func:`explore_all_schedules`
runs every interleaving and every schedule in which one process crashes
after some prefix, and checks agreement, validity and wait-freedom.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable

SUCCESS = "success"
FAIL = "fail"
KINDS = ("bidirectional", "unidirectional")
# deliberately broken objects, to show the exploration catches bugs
MUTATIONS = ("close_keeps_channel", "close_skips_balance_check")


class CounterexampleFound(AssertionError):
    def __init__(self, report: "Report"):
        super().__init__(report.summary())
        self.report = report


@dataclass(frozen=True)
class World:
    A: tuple[int, int] = (0, 0)  # balances of a and b
    channel: tuple[int, int] | None = (1, 1)
    R1: Any = None
    R2: Any = None


@dataclass(frozen=True)
class ChannelObject:
    """Atomic channel semantics; ``p`` is 1 for owner(a), 2 for owner(b)."""

    kind: str = "bidirectional"
    mutation: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.mutation not in (None, *MUTATIONS):
            raise ValueError(f"unknown mutation {self.mutation!r}")

    def transfer(self, w: World, p: int, amt: int) -> tuple[World, Any]:
        if w.channel is None:
            return w, None
        bal_a, bal_b = w.channel
        if p == 1 and bal_a >= amt:
            return replace(w, channel=(bal_a - amt, bal_b + amt)), SUCCESS
        if p == 2 and self.kind == "bidirectional" and bal_b >= amt:
            return replace(w, channel=(bal_a + amt, bal_b - amt)), SUCCESS
        return w, None

    def close(self, w: World, p: int, bal: int) -> tuple[World, Any]:
        """Close by ``p`` keeping ``bal`` on its own side."""
        if w.channel is None:
            return w, FAIL
        if self.kind == "unidirectional" and p not in (1, 2):
            return w, FAIL
        cur_a, cur_b = w.channel
        own = cur_a if p == 1 else cur_b
        if bal > own and self.mutation != "close_skips_balance_check":
            return w, FAIL
        other = cur_a + cur_b - bal
        amt_a, amt_b = (bal, other) if p == 1 else (other, bal)
        channel = w.channel if self.mutation == "close_keeps_channel" else None
        return replace(w, A=(w.A[0] + amt_a, w.A[1] + amt_b), channel=channel), SUCCESS

    # the unidirectional object's two closes are ``close`` restricted by role
    def source_close(self, w: World, bal_a: int) -> tuple[World, Any]:
        return self.close(w, 1, bal_a)

    def target_close(self, w: World, bal_b: int) -> tuple[World, Any]:
        return self.close(w, 2, bal_b)


def atomic_channel_op(obj: ChannelObject, world: World, p: int, op: str,
                      *args: int) -> tuple[World, Any]:
    """Apply one channel operation atomically; returns (world', response)."""
    if op == "transfer":
        return obj.transfer(world, p, *args)
    if op == "close" and obj.kind == "bidirectional":
        return obj.close(world, p, *args)
    if op == "source_close" and obj.kind == "unidirectional" and p == 1:
        return obj.source_close(world, *args)
    if op == "target_close" and obj.kind == "unidirectional" and p == 2:
        return obj.target_close(world, *args)
    return world, FAIL


# -- the reduction as step programs ---------------------------------------------------


@dataclass(frozen=True)
class Local:
    pc: int = 0
    seen_b: int | None = None
    decided: Any = None


# A step maps (object, world, local, proposal) to (world, local), or None when
# it is not enabled (the "wait until" step before A(b) changes).
Step = Callable[[ChannelObject, World, Local, Any], "tuple[World, Local] | None"]


def _write(reg: str) -> Step:
    def step(obj, w, loc, v):
        return replace(w, **{reg: v}), replace(loc, pc=loc.pc + 1)
    step.__name__ = f"{reg}.write"
    return step


def _channel(p: int, op: str, *args: int) -> Step:
    def step(obj, w, loc, v):
        w2, _ = atomic_channel_op(obj, w, p, op, *args)
        return w2, replace(loc, pc=loc.pc + 1)
    step.__name__ = f"{op}{args}"
    return step


def _wait(obj, w, loc, v):
    if w.A[1] == 0:
        return None
    return w, replace(loc, pc=loc.pc + 1)


def _read_b(obj, w, loc, v):
    return w, replace(loc, pc=loc.pc + 1, seen_b=w.A[1])


def _decide(obj, w, loc, v):
    value = w.R1 if loc.seen_b == 2 else w.R2
    return w, replace(loc, pc=loc.pc + 1, decided=value)


_wait.__name__, _read_b.__name__, _decide.__name__ = "wait A(b)!=0", "A.read(b)", "R.read"


def programs(kind: str) -> dict[int, list[Step]]:
    if kind == "bidirectional":
        close1, close2 = _channel(1, "close", 0), _channel(2, "close", 1)
    else:
        close1, close2 = _channel(1, "source_close", 0), _channel(2, "target_close", 1)
    tail = [_wait, _read_b, _decide]
    return {1: [_write("R1"), _channel(1, "transfer", 1), close1, *tail],
            2: [_write("R2"), close2, *tail]}


def propose(kind: str, schedule: list[int], proposals: dict[int, Any] | None = None,
            mutation: str | None = None) -> dict[int, Any]:
    """Run the schedule (a list of process ids, one per step); returns the
    decisions of processes that finished."""
    obj = ChannelObject(kind, mutation)
    progs = programs(kind)
    proposals = proposals or {1: "v1", 2: "v2"}
    w, locs = World(), {1: Local(), 2: Local()}
    for p in schedule:
        res = progs[p][locs[p].pc](obj, w, locs[p], proposals[p])
        if res is None:
            raise ValueError(f"step of p{p} not enabled")
        w, locs[p] = res
    return {p: loc.decided for p, loc in locs.items() if loc.pc == len(progs[p])}


# -- exhaustive exploration ------------------------------------------------------------


@dataclass
class Report:
    kind: str
    mutation: str | None
    schedules: int = 0
    crash_schedules: int = 0
    final_b: set[int] = field(default_factory=set)
    violations: list[tuple[str, list[str]]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        lines = [f"object: {self.kind}" + (f" (mutation {self.mutation})" if self.mutation else ""),
                 f"complete schedules: {self.schedules}",
                 f"single-crash schedules: {self.crash_schedules}",
                 f"final A.read(b) values: {sorted(self.final_b)}",
                 f"violations: {len(self.violations)}"]
        for what, sched in self.violations[:5]:
            lines.append(f"  {what}: {' '.join(sched)}")
        return "\n".join(lines)


def explore_all_schedules(kind: str = "bidirectional", mutation: str | None = None,
                          proposals: dict[int, Any] | None = None,
                          crash_points: bool = True,
                          raise_on_violation: bool = False) -> Report:
    obj = ChannelObject(kind, mutation)
    progs = programs(kind)
    proposals = proposals or {1: "v1", 2: "v2"}
    report = Report(kind, mutation)

    def label(p: int, step: Step) -> str:
        return f"p{p}:{step.__name__}"

    def enabled(w, locs, alive):
        out = []
        for p in alive:
            if locs[p].pc < len(progs[p]):
                res = progs[p][locs[p].pc](obj, w, locs[p], proposals[p])
                if res is not None:
                    out.append((p, res))
        return out

    def check_decisions(w, locs, alive, sched):
        decided = {p: locs[p].decided for p in alive}
        if len(set(decided.values())) > 1:
            report.violations.append(("agreement", sched))
        if any(d not in proposals.values() for d in decided.values()):
            report.violations.append(("validity", sched))

    def run(w, locs, alive, sched, crashed):
        moves = enabled(w, locs, alive)
        unfinished = [p for p in alive if locs[p].pc < len(progs[p])]
        if not moves:
            if unfinished:
                report.violations.append(("wait-freedom", sched))
                return
            if crashed:
                report.crash_schedules += 1
            else:
                report.schedules += 1
                report.final_b.add(w.A[1])
                if w.A[1] not in (1, 2):
                    report.violations.append(("decision totality", sched))
            check_decisions(w, locs, alive, sched)
            return
        for p, (w2, loc2) in moves:
            locs2 = {**locs, p: loc2}
            run(w2, locs2, alive, sched + [label(p, progs[p][locs[p].pc])], crashed)
        if crash_points and not crashed:
            for p in alive:
                if locs[p].pc < len(progs[p]):
                    rest = tuple(q for q in alive if q != p)
                    run(w, locs, rest, sched + [f"p{p}:crash"], True)

    run(World(), {1: Local(), 2: Local()}, (1, 2), [], False)
    if raise_on_violation and report.violations:
        raise CounterexampleFound(report)
    return report
