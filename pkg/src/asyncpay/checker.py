"""Sequential consistency and Byzantine sequential consistency of histories.

The sequential specification is :class:`SpecMachine`, written from scratch:
the asset-transfer object (read, multi-output transfer) and unidirectional
channels (open, transfer, target_close) on top of it. Escrow accounts are an
implementation detail of channels and are not part of the abstract state:
reading one is unconstrained, debiting one always succeeds, crediting one has
no effect.

``check_sc`` searches, depth first with memoisation over (per-process
frontier, machine state), for a total order that respects every process's
program order and replays legally. A pending operation may be dropped or
completed with any response. ``check_bsc`` first keeps only correct processes
and then augments the history with Byzantine operations:

* before each successful target_close by a correct process on a channel whose
  source is Byzantine, an ``open`` of the closed balance and a ``transfer`` of
  it, both by the source's owner;
* every ledger transfer broadcast by a Byzantine process and applied by
  correct replicas (the trace's ``effect`` records), in broadcast order.

Accounts with a Byzantine owner have unknown balances: their reads are
unconstrained and debits from them always succeed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .history import EFFECT, INVOCATION, RESPONSE, History

SUCCESS = "success"
FAIL = "fail"
DEFAULT_BUDGET = 10**6


class _Any:
    def __repr__(self) -> str:
        return "ANY"


ANY = _Any()


class SearchBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Op:
    op_id: str
    actor: int
    kind: str
    args: tuple[tuple[str, Any], ...]
    expected: Any = ANY
    optional: bool = False  # a pending op the completion may drop

    @property
    def arg(self) -> dict[str, Any]:
        return dict(self.args)


def _freeze(value: Any) -> Any:
    if isinstance(value, dict):
        return tuple(sorted((k, _freeze(v)) for k, v in value.items()))
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


def make_op(op_id: str, actor: int, kind: str, args: dict[str, Any],
            expected: Any = ANY, optional: bool = False) -> Op:
    return Op(op_id, actor, kind, tuple(sorted((k, _freeze(v)) for k, v in args.items())),
              expected, optional)


# -- sequential specification ---------------------------------------------------

State = tuple[tuple[int, ...], tuple]


class SpecMachine:
    """Combined sequential state of the ledger and the channels."""

    def __init__(self, genesis: dict[str, int], owners: dict[str, Iterable[int]],
                 byzantine: Iterable[int] = ()):
        byz = set(byzantine)
        self.owners = {a: frozenset(o) for a, o in owners.items()}
        for a in genesis:
            self.owners.setdefault(a, frozenset())
        self.untracked = {a for a, o in self.owners.items() if len(o) > 1 or o & byz}
        self.accounts = sorted(a for a in genesis if a not in self.untracked)
        self.index = {a: i for i, a in enumerate(self.accounts)}
        self.initial: State = (tuple(genesis[a] for a in self.accounts), ())

    def is_untracked(self, account: str) -> bool:
        return account in self.untracked

    def owns(self, p: int, account: str) -> bool:
        return p in self.owners.get(account, frozenset())

    def balance(self, state: State, account: str) -> Any:
        if account in self.untracked:
            return ANY
        i = self.index.get(account)
        return 0 if i is None else state[0][i]

    def _credit(self, bal: list[int], account: str, amt: int) -> None:
        i = self.index.get(account)
        if i is not None:
            bal[i] += amt

    def _funded(self, state: State, account: str, amt: int) -> bool:
        b = self.balance(state, account)
        return b is ANY or b >= amt

    def apply(self, state: State, op: Op) -> tuple[State, Any]:
        """Return (next state, response) of ``op`` run by ``op.actor``."""
        args = op.arg
        bal, chans = state
        p = op.actor
        kind = op.kind
        if kind == "ledger.read":
            return state, self.balance(state, args["account"])
        if kind == "ledger.transfer":
            src = args["source"]
            outputs = args["outputs"]
            if (not self.owns(p, src) or not outputs
                    or any(type(a) is not int or a < 0 for _, a in outputs)):
                return state, FAIL
            total = sum(a for _, a in outputs)
            if not self._funded(state, src, total):
                return state, FAIL
            nb = list(bal)
            self._credit(nb, src, -total)
            for dst, amt in outputs:
                self._credit(nb, dst, amt)
            return (tuple(nb), chans), SUCCESS
        key = (args.get("source"), args.get("target"))
        channels = dict(chans)
        if kind == "channel.open":
            amt = args["amount"]
            if (not self.owns(p, key[0]) or key in channels or type(amt) is not int
                    or amt < 0 or not self._funded(state, key[0], amt)):
                return state, FAIL
            nb = list(bal)
            self._credit(nb, key[0], -amt)
            channels[key] = (amt, 0)
            return (tuple(nb), tuple(sorted(channels.items()))), SUCCESS
        if kind == "channel.transfer":
            amt = args["amount"]
            if not self.owns(p, key[0]) or key not in channels:
                return state, None
            bal_a, bal_b = channels[key]
            if type(amt) is not int or amt < 0 or bal_a < amt:
                return state, None
            channels[key] = (bal_a - amt, bal_b + amt)
            return (bal, tuple(sorted(channels.items()))), None
        if kind == "channel.target_close":
            want = args["balance"]
            if not self.owns(p, key[1]) or key not in channels:
                return state, FAIL
            cur_a, cur_b = channels[key]
            if type(want) is not int or want < 0 or want > cur_b:
                return state, FAIL
            nb = list(bal)
            self._credit(nb, key[0], cur_a + cur_b - want)
            self._credit(nb, key[1], want)
            del channels[key]
            return (tuple(nb), tuple(sorted(channels.items()))), SUCCESS
        raise ValueError(f"unknown operation {kind!r}")


def _matches(expected: Any, got: Any) -> bool:
    return expected is ANY or got is ANY or expected == got


# -- histories to per-process sequences ---------------------------------------------


def sequences_of(history: History, keep: set[int] | None = None) -> dict[int, list[Op]]:
    """Per-process operation sequences; a trailing pending op becomes optional."""
    seqs: dict[int, list[Op]] = {}
    open_inv: dict[int, Any] = {}
    for e in history.events:
        if e.kind == EFFECT or (keep is not None and e.process not in keep):
            continue
        if e.kind == INVOCATION:
            open_inv[e.process] = e
        elif e.kind == RESPONSE:
            inv = open_inv.pop(e.process)
            seqs.setdefault(e.process, []).append(
                make_op(inv.op_id, inv.process, inv.op, inv.args, e.payload))
    for pid, inv in open_inv.items():
        seqs.setdefault(pid, []).append(
            make_op(inv.op_id, inv.process, inv.op, inv.args, ANY, optional=True))
    return seqs


def augment(history: History, byzantine: set[int]) -> dict[Any, list[Op]]:
    """Correct processes' sequences plus the Byzantine augmentation."""
    correct = {p for p in range(history.n)} - byzantine
    seqs: dict[Any, list[Op]] = {}
    owners = {a: set(o) for a, o in history.owners.items()}
    for pid, ops in sequences_of(history, correct).items():
        out: list[Op] = []
        for op in ops:
            if op.kind == "channel.target_close" and op.expected == SUCCESS:
                a = op.arg["source"]
                src_owners = owners.get(a, set())
                if src_owners and src_owners <= byzantine:
                    actor = min(src_owners)
                    ch = {"source": a, "target": op.arg["target"]}
                    bal = op.arg["balance"]
                    out.append(make_op(f"{op.op_id}~open", actor, "channel.open",
                                       {**ch, "amount": bal}))
                    out.append(make_op(f"{op.op_id}~transfer", actor, "channel.transfer",
                                       {**ch, "amount": bal}))
            out.append(op)
        seqs[pid] = out
    for e in history.effects():
        if e.process in byzantine:
            args = dict(e.args)
            args["outputs"] = tuple(tuple(o) for o in args.get("outputs", ()))
            seqs.setdefault(f"byz{e.process}", []).append(
                make_op(e.op_id, e.process, e.op, args, e.payload))
    return seqs


# -- verdicts --------------------------------------------------------------------------


@dataclass
class Verdict:
    status: str  # "consistent" | "violation" | "unknown"
    witness: list[str] = field(default_factory=list)
    evidence: dict[str, Any] = field(default_factory=dict)
    explored: int = 0

    @property
    def consistent(self) -> bool:
        return self.status == "consistent"

    def report(self) -> str:
        lines = [f"verdict: {self.status}", f"explored: {self.explored}"]
        if self.witness:
            lines.append("witness: " + " ".join(self.witness))
        for k, v in self.evidence.items():
            lines.append(f"{k}: {v}")
        return "\n".join(lines)


def search(machine: SpecMachine, seqs: dict[Any, Sequence[Op]],
           budget: int = DEFAULT_BUDGET) -> Verdict:
    names = sorted(seqs, key=str)
    lists = [list(seqs[k]) for k in names]
    total = sum(len(l) for l in lists)
    seen: set = set()
    order: list[str] = []
    explored = 0
    deepest: list[str] = []
    blocked: dict[str, Any] = {}

    def dfs(frontier: tuple[int, ...], state: State) -> bool:
        nonlocal explored, deepest, blocked
        if all(frontier[i] == len(lists[i]) for i in range(len(lists))):
            return True
        key = (frontier, state)
        if key in seen:
            return False
        seen.add(key)
        explored += 1
        if explored > budget:
            raise SearchBudgetExceeded
        if len(order) > len(deepest):
            deepest = list(order)
            blocked = {}
        stuck: dict[str, Any] = {}
        for i, ops in enumerate(lists):
            k = frontier[i]
            if k == len(ops):
                continue
            op = ops[k]
            nxt = frontier[:i] + (k + 1,) + frontier[i + 1:]
            new_state, got = machine.apply(state, op)
            if _matches(op.expected, got):
                order.append(op.op_id)
                if dfs(nxt, new_state):
                    return True
                order.pop()
            else:
                stuck[op.op_id] = {"expected": op.expected, "spec": got}
            if op.optional and dfs(nxt, state):
                return True
        if len(order) == len(deepest):
            blocked = stuck
        return False

    try:
        ok = dfs(tuple(0 for _ in lists), machine.initial)
    except SearchBudgetExceeded:
        return Verdict("unknown", evidence={"reason": f"search budget {budget} exhausted",
                                            "ops": total}, explored=explored)
    if ok:
        return Verdict("consistent", witness=list(order), explored=explored)
    return Verdict("violation", explored=explored, evidence={
        "ops": total,
        "longest_legal_prefix": deepest,
        "blocked_after_prefix": {k: f"history says {v['expected']!r}, specification gives {v['spec']!r}"
                                 for k, v in blocked.items()},
    })


def _machine(history: History, byzantine: Iterable[int] = ()) -> SpecMachine:
    return SpecMachine(history.genesis, history.owners, byzantine)


def check_sc(history: History, budget: int = DEFAULT_BUDGET) -> Verdict:
    return search(_machine(history), sequences_of(history), budget)


def check_bsc(history: History, byzantine: Iterable[int] | None = None,
              budget: int = DEFAULT_BUDGET) -> Verdict:
    byz = set(history.byzantine if byzantine is None else byzantine)
    if not byz:
        return check_sc(history, budget)
    return search(_machine(history, byz), augment(history, byz), budget)


# -- replay and brute force --------------------------------------------------------


@dataclass
class Replay:
    legal: bool
    first_illegal: str | None = None
    reason: str = ""


def replay(order: Sequence[str], history: History,
           byzantine: Iterable[int] = ()) -> Replay:
    """Replay ``order`` (op ids) against the sequential specification.

    Pending operations absent from ``order`` are treated as dropped.
    """
    byz = set(byzantine)
    seqs = augment(history, byz) if byz else sequences_of(history)
    machine = _machine(history, byz)
    by_id = {op.op_id: (name, i, op) for name, ops in seqs.items() for i, op in enumerate(ops)}
    pos = {name: 0 for name in seqs}
    state = machine.initial
    for op_id in order:
        if op_id not in by_id:
            return Replay(False, op_id, "not an operation of the history")
        name, i, op = by_id[op_id]
        while pos[name] < i and seqs[name][pos[name]].optional:
            pos[name] += 1
        if pos[name] != i:
            return Replay(False, op_id, "breaks program order")
        pos[name] += 1
        state, got = machine.apply(state, op)
        if not _matches(op.expected, got):
            return Replay(False, op_id, f"history says {op.expected!r}, specification gives {got!r}")
    for name, ops in seqs.items():
        missing = [op.op_id for op in ops[pos[name]:] if not op.optional]
        if missing:
            return Replay(False, missing[0], "operation missing from order")
    return Replay(True)


def brute_force(history: History, byzantine: Iterable[int] = ()) -> list[str] | None:
    """Try every interleaving and completion; only for tiny histories."""
    byz = set(byzantine)
    seqs = augment(history, byz) if byz else sequences_of(history)
    names = sorted(seqs, key=str)
    variants = []
    for name in names:
        ops = seqs[name]
        if ops and ops[-1].optional:
            variants.append([ops, ops[:-1]])
        else:
            variants.append([ops])
    for choice in itertools.product(*variants):
        for order in interleavings([[op.op_id for op in ops] for ops in choice]):
            if replay(order, history, byz).legal:
                return order
    return None


def interleavings(lists: Sequence[Sequence[str]]):
    """Every merge of ``lists`` preserving each list's order."""
    cursor = [0] * len(lists)
    total = sum(len(l) for l in lists)
    out: list[str] = []

    def rec():
        if len(out) == total:
            yield list(out)
            return
        for i, l in enumerate(lists):
            if cursor[i] < len(l):
                out.append(l[cursor[i]])
                cursor[i] += 1
                yield from rec()
                cursor[i] -= 1
                out.pop()

    yield from rec()
