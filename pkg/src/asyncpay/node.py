"""A correct process: broadcast, ledger replica and channel endpoint glued
together as one event-driven state machine.

The simulator drives a node through :meth:`Node.invoke` and
:meth:`Node.receive`; the node appends outgoing messages to ``outbox`` and
completed operations to ``responses``. Every outgoing message is stamped with
the id of the top-level operation it is working for: the operation being
invoked, the operation being resumed, or else the tag of the message being
processed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import GeneratorType
from typing import Any, Callable, Generator

from .broadcast import BrbMessage, BrbNode
from .channel import FAIL, OK, ChannelEndpoint, ChannelMsg
from .crypto import KeyPair
from .ledger import Amount, Directory, LedgerReplica, TransferTx, well_formed

MUTATIONS = ("skip_open_gate", "accept_nonmonotonic", "skip_multisig_check")


@dataclass(frozen=True)
class Mutations:
    """Deliberate protocol bugs, used only to test the checker."""

    skip_open_gate: bool = False
    accept_nonmonotonic: bool = False
    skip_multisig_check: bool = False

    @classmethod
    def from_names(cls, names) -> "Mutations":
        unknown = set(names) - set(MUTATIONS)
        if unknown:
            raise ValueError(f"unknown mutation(s): {sorted(unknown)}")
        return cls(**{name: True for name in names})

    def names(self) -> list[str]:
        return [m for m in MUTATIONS if getattr(self, m)]


@dataclass
class Invocation:
    op_id: str
    process: int
    op: str
    args: dict[str, Any] = field(default_factory=dict)
    when: dict[str, Any] | None = None
    at: int = 0


class Node:
    byzantine = False
    behavior = "correct"

    def __init__(self, pid: int, n: int, f: int, directory: Directory,
                 keys: dict[str, KeyPair], genesis: dict[str, Amount],
                 mutations: Mutations = Mutations()):
        self.pid = pid
        self.n = n
        self.f = f
        self.directory = directory
        self.keys = keys
        self.mutations = mutations
        self.brb = BrbNode(pid, n, f)
        self.ledger = LedgerReplica(directory, genesis,
                                    skip_multisig_check=mutations.skip_multisig_check)
        self.channels = ChannelEndpoint(self, skip_open_gate=mutations.skip_open_gate,
                                        accept_nonmonotonic=mutations.accept_nonmonotonic)
        self.outbox: list[tuple[int, Any, str]] = []
        self.responses: list[tuple[str, Any]] = []
        self.tag = ""
        self.busy: Invocation | None = None
        self._waiting: dict[tuple[int, int], tuple[Invocation, Generator]] = {}
        # op tag of every broadcast this node started
        self.broadcast_tags: list[str] = []

    # -- plumbing --------------------------------------------------------------

    def send(self, dst: int, payload: Any) -> None:
        self.outbox.append((dst, payload, self.tag))

    def brb_broadcast(self, payload: Any) -> int:
        seq, out = self.brb.broadcast(payload)
        self.broadcast_tags.append(self.tag)
        for dst, msg in out:
            self.send(dst, msg)
        return seq

    def ledger_invoke(self, tx: TransferTx) -> Generator[Any, Any, bool]:
        """Submit a signed transfer; resumes with True once applied locally."""
        if not self.ledger.admissible(tx, self.pid):
            return False
        seq = self.brb_broadcast(tx)
        applied = yield (self.pid, seq)
        return bool(applied)

    @property
    def idle(self) -> bool:
        return self.busy is None

    # -- operations ------------------------------------------------------------

    def handlers(self) -> dict[str, Callable[..., Any]]:
        return {
            "ledger.read": self.op_read,
            "ledger.transfer": self.op_transfer,
            "channel.open": self.op_open,
            "channel.transfer": self.op_pay,
            "channel.target_close": self.op_target_close,
        }

    def resolve(self, inv: Invocation) -> dict[str, Any]:
        """Arguments as the operation will actually see them."""
        args = dict(inv.args)
        if inv.op == "channel.target_close" and args.get("balance", "latest") == "latest":
            bal = self.channels.target_balance(args["source"], args["target"])
            args["balance"] = 0 if bal is None else bal
        return args

    def invoke(self, inv: Invocation, args: dict[str, Any]) -> None:
        handler = self.handlers().get(inv.op)
        if handler is None:
            raise ValueError(f"unknown operation {inv.op!r}")
        self.busy = inv
        self.tag = inv.op_id
        result = handler(**args)
        if isinstance(result, GeneratorType):
            self._advance(inv, result, None)
        else:
            self._finish(inv, result)

    def _advance(self, inv: Invocation, gen: Generator, value: Any) -> None:
        saved, self.tag = self.tag, inv.op_id
        try:
            key = gen.send(value)
        except StopIteration as stop:
            self._finish(inv, stop.value)
        else:
            self._waiting[key] = (inv, gen)
        finally:
            self.tag = saved

    def _finish(self, inv: Invocation, result: Any) -> None:
        self.busy = None
        self.responses.append((inv.op_id, result))

    def op_read(self, account: str) -> Amount:
        return self.ledger.read(account)

    def op_transfer(self, source: str, outputs) -> Generator[Any, Any, str]:
        outputs = tuple((dst, amt) for dst, amt in outputs)
        if (source not in self.keys or self.pid not in self.directory.owners(source)
                or not well_formed(outputs)):
            return FAIL
        if self.ledger.read(source) < sum(amt for _, amt in outputs):
            return FAIL
        tx = TransferTx(source, outputs, self.ledger.next_nonce(source),
                        self.ledger.undeclared_credits(source)).signed_by(self.keys[source])
        applied = yield from self.ledger_invoke(tx)
        return OK if applied else FAIL

    def op_open(self, source: str, target: str, amount: Amount):
        return self.channels.open(source, target, amount)

    def op_pay(self, source: str, target: str, amount: Amount) -> None:
        return self.channels.transfer(source, target, amount)

    def op_target_close(self, source: str, target: str, balance: Amount):
        return self.channels.target_close(source, target, balance)

    # -- messages --------------------------------------------------------------

    def receive(self, src: int, payload: Any) -> None:
        if isinstance(payload, BrbMessage):
            out, deliveries = self.brb.handle(src, payload)
            for dst, msg in out:
                self.send(dst, msg)
            changed = False
            for d in deliveries:
                for outcome in self.ledger.deliver(d.payload, d.origin, d.seq):
                    changed = changed or outcome.applied
                    self._resolve(outcome.broadcaster, outcome.seq, outcome.applied)
                if not isinstance(d.payload, TransferTx):
                    self._resolve(d.origin, d.seq, False)
            if changed:
                self.channels.retry()
        elif isinstance(payload, ChannelMsg):
            self.channels.receive(src, payload)

    def _resolve(self, broadcaster: int, seq: int, applied: bool | None) -> None:
        waiter = self._waiting.pop((broadcaster, seq), None)
        if waiter is not None:
            self._advance(*waiter, applied)

    # -- scheduling conditions ---------------------------------------------------

    def condition_holds(self, cond: dict[str, Any] | None) -> bool:
        """Scenario-level guard deciding when a scripted op may start."""
        if not cond:
            return True
        if "target_balance" in cond:
            c = cond["target_balance"]
            bal = self.channels.target_balance(c["source"], c["target"])
            if bal is None or bal < c.get("at_least", 0):
                return False
        if "balance" in cond:
            c = cond["balance"]
            if self.ledger.read(c["account"]) < c.get("at_least", 0):
                return False
        if "source_closed" in cond:
            c = cond["source_closed"]
            if (c["source"], c["target"]) in self.channels.source:
                return False
        return True
