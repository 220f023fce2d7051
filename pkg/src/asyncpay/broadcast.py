"""Source-ordered Byzantine reliable broadcast.

Bracha's three-phase protocol (INIT, ECHO, READY) run once per
``(origin, seq)`` instance, plus a per-origin reorder buffer so each origin's
payloads are handed to the upper layer in sequence order with no gaps.

Thresholds, for ``n`` processes and at most ``f < n/3`` faulty ones:

* ECHO after the first INIT received directly from the origin;
* READY after ``ceil((n + f + 1) / 2)`` matching ECHOs or ``f + 1`` matching
  READYs;
* deliver after ``2f + 1`` matching READYs.

A node is a pure state machine: :meth:`BrbNode.broadcast` and
:meth:`BrbNode.handle` return the messages to send and never touch a network.
Messages are addressed to all ``n`` processes, including the sender itself.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Hashable, NamedTuple


class Phase(enum.Enum):
    INIT = "init"
    ECHO = "echo"
    READY = "ready"


@dataclass(frozen=True)
class BrbMessage:
    phase: Phase
    origin: int
    seq: int
    payload: Any
    relayer: int


class Delivery(NamedTuple):
    origin: int
    seq: int
    payload: Any


Outgoing = list[tuple[int, BrbMessage]]


def echo_quorum(n: int, f: int) -> int:
    return (n + f + 2) // 2


def message_count(n: int, *, include_self: bool = False) -> int:
    """Messages sent by correct processes for one fault-free broadcast.

    The origin sends ``n`` INITs and every process sends ``n`` ECHOs and ``n``
    READYs. Without self-addressed messages that is ``(n - 1)(2n + 1)``.
    """
    if include_self:
        return n + 2 * n * n
    return (n - 1) * (2 * n + 1)


@dataclass
class _Instance:
    init_payload: Any = None
    has_init: bool = False
    sent_echo: bool = False
    sent_ready: bool = False
    done: bool = False
    # relayer -> payload; a relayer's first vote is the only one counted
    echoes: dict[int, Hashable] = field(default_factory=dict)
    readies: dict[int, Hashable] = field(default_factory=dict)

    def votes_cleared(self) -> None:
        # only the echo flag matters once delivered
        self.echoes.clear()
        self.readies.clear()
        self.init_payload = None

    def tally(self, votes: dict[int, Hashable], payload: Hashable) -> int:
        return sum(1 for v in votes.values() if v == payload)


class BrbNode:
    def __init__(self, pid: int, n: int, f: int):
        if not 0 <= pid < n:
            raise ValueError("pid out of range")
        self.pid = pid
        self.n = n
        self.f = f
        self.echo_threshold = echo_quorum(n, f)
        self.ready_threshold = f + 1
        self.deliver_threshold = 2 * f + 1
        self.next_seq = 1
        self.delivered_up_to: dict[int, int] = {}
        self._instances: dict[tuple[int, int], _Instance] = {}
        self._pending: dict[int, dict[int, Any]] = {}

    def _to_all(self, phase: Phase, origin: int, seq: int, payload: Any) -> Outgoing:
        msg = BrbMessage(phase, origin, seq, payload, self.pid)
        return [(dst, msg) for dst in range(self.n)]

    def broadcast(self, payload: Any) -> tuple[int, Outgoing]:
        seq = self.next_seq
        self.next_seq += 1
        return seq, self._to_all(Phase.INIT, self.pid, seq, payload)

    def handle(self, src: int, msg: BrbMessage) -> tuple[Outgoing, list[Delivery]]:
        out: Outgoing = []
        if msg.relayer != src or msg.seq < 1 or not 0 <= msg.origin < self.n:
            return out, []
        key = (msg.origin, msg.seq)
        inst = self._instances.setdefault(key, _Instance())

        if msg.phase is Phase.INIT:
            # only the origin may initiate; a second, conflicting INIT is ignored.
            # A node echoes its first INIT even after delivering the instance.
            if src != msg.origin or inst.has_init:
                return out, []
            inst.has_init = True
            inst.init_payload = msg.payload
            if not inst.sent_echo:
                inst.sent_echo = True
                out += self._to_all(Phase.ECHO, *key, msg.payload)
        elif inst.done:
            return out, []
        elif msg.phase is Phase.ECHO:
            if src in inst.echoes:
                return out, []
            inst.echoes[src] = msg.payload
            if (not inst.sent_ready
                    and inst.tally(inst.echoes, msg.payload) >= self.echo_threshold):
                inst.sent_ready = True
                out += self._to_all(Phase.READY, *key, msg.payload)
        else:
            if src in inst.readies:
                return out, []
            inst.readies[src] = msg.payload
            count = inst.tally(inst.readies, msg.payload)
            if not inst.sent_ready and count >= self.ready_threshold:
                inst.sent_ready = True
                out += self._to_all(Phase.READY, *key, msg.payload)
            if count >= self.deliver_threshold:
                inst.done = True
                self._pending.setdefault(msg.origin, {})[msg.seq] = msg.payload
                return out, self._flush(msg.origin)
        return out, []

    def _flush(self, origin: int) -> list[Delivery]:
        ready = self._pending.get(origin, {})
        done: list[Delivery] = []
        nxt = self.delivered_up_to.get(origin, 0) + 1
        while nxt in ready:
            done.append(Delivery(origin, nxt, ready.pop(nxt)))
            self._instances[(origin, nxt)].votes_cleared()
            self.delivered_up_to[origin] = nxt
            nxt += 1
        return done

    def is_buffered(self, origin: int, seq: int) -> bool:
        """True if (origin, seq) reached 2f+1 READYs but waits on a lower seq."""
        return seq in self._pending.get(origin, {})
