"""Seeded discrete-event simulator of an asynchronous network.

Links are reliable and FIFO per ordered pair of processes. At every step the
scheduler picks, uniformly at random, one enabled event: the head of a
non-empty link, or the next scripted invocation of an idle process whose
start condition holds. A run is fully determined by its configuration and
seed.

Every message carries the id of the top-level operation that caused it, so
message counts can be charged to operations.
"""

from __future__ import annotations

import csv
import io
import random
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Any

from .broadcast import BrbMessage
from .byzantine import BEHAVIORS
from .crypto import keygen
from .history import EFFECT, INVOCATION, RESPONSE, History
from .ledger import Directory
from .node import Invocation, Mutations, Node

DEFAULT_STEP_CAP = 10**6


class ConfigError(ValueError):
    pass


class BudgetExceeded(ConfigError):
    """More Byzantine processes than the corruption budget allows."""


class StepCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class GenesisAccount:
    account: str
    owner: int
    balance: int


@dataclass
class ByzantineSpec:
    process: int
    behavior: str
    args: dict[str, Any] = field(default_factory=dict)


@dataclass
class NetworkConfig:
    n: int
    f: int
    seed: int = 0
    genesis: list[GenesisAccount] = field(default_factory=list)
    byzantine: list[ByzantineSpec] = field(default_factory=list)
    script: list[Invocation] = field(default_factory=list)
    mutations: Mutations = Mutations()
    # "uniform", or "starve": hold back links into ``starve`` for
    # ``starve_steps`` steps unless nothing else is enabled
    scheduler: str = "uniform"
    starve: int | None = None
    starve_steps: int = 0
    step_cap: int = DEFAULT_STEP_CAP

    def validate(self) -> None:
        if self.n < 1 or self.f < 0:
            raise ConfigError("need n >= 1 and f >= 0")
        if 3 * self.f >= self.n:
            raise ConfigError(f"f={self.f} violates f < n/3 for n={self.n}")
        pids = [b.process for b in self.byzantine]
        if len(set(pids)) != len(pids):
            raise ConfigError("a process is listed as Byzantine twice")
        if len(pids) > self.f:
            raise BudgetExceeded(f"{len(pids)} Byzantine processes exceed f={self.f}")
        for b in self.byzantine:
            if not 0 <= b.process < self.n:
                raise ConfigError(f"Byzantine process {b.process} out of range")
            if b.behavior not in BEHAVIORS:
                raise ConfigError(f"unknown behavior {b.behavior!r}")
        seen = set()
        for g in self.genesis:
            if g.account in seen:
                raise ConfigError(f"account {g.account!r} listed twice")
            seen.add(g.account)
            if not 0 <= g.owner < self.n:
                raise ConfigError(f"owner of {g.account!r} out of range")
            if type(g.balance) is not int or g.balance < 0:
                raise ConfigError(f"balance of {g.account!r} must be a non-negative int")
            if any(c in g.account for c in ",[]"):
                raise ConfigError(f"account id {g.account!r} contains a reserved character")
        for inv in self.script:
            if not 0 <= inv.process < self.n:
                raise ConfigError(f"{inv.op_id}: process out of range")
        if self.scheduler not in ("uniform", "starve"):
            raise ConfigError(f"unknown scheduler {self.scheduler!r}")
        if self.step_cap < 1:
            raise ConfigError("step_cap must be positive")

    @property
    def byzantine_ids(self) -> set[int]:
        return {b.process for b in self.byzantine}


@dataclass(frozen=True)
class Envelope:
    src: int
    dst: int
    payload: Any
    op_tag: str
    sent_by_correct: bool


@dataclass
class OpMetrics:
    op_id: str
    op_kind: str
    process: int
    msgs_correct: int = 0
    msgs_total: int = 0
    broadcasts: int = 0
    by_module: dict[str, int] = field(default_factory=lambda: defaultdict(int))


@dataclass
class Metrics:
    n: int
    f: int
    ops: dict[str, OpMetrics] = field(default_factory=dict)

    CSV_COLUMNS = ("op_id", "op_kind", "n", "f", "msgs_correct", "msgs_total", "broadcasts")

    def op(self, op_id: str) -> OpMetrics:
        return self.ops[op_id]

    def of_kind(self, kind: str) -> list[OpMetrics]:
        return [m for m in self.ops.values() if m.op_kind == kind]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for m in self.ops.values():
            w.writerow([m.op_id, m.op_kind, self.n, self.f, m.msgs_correct,
                        m.msgs_total, m.broadcasts])
        return buf.getvalue()


@dataclass
class RunResult:
    history: History
    metrics: Metrics
    trace: list[tuple]
    nodes: list[Node]
    violations: list[str]
    steps: int
    unstarted: list[str]

    @property
    def correct_nodes(self) -> list[Node]:
        return [nd for nd in self.nodes if not nd.byzantine]


def build_directory(genesis: list[GenesisAccount]):
    directory = Directory()
    keys: dict[int, dict] = defaultdict(dict)
    for g in genesis:
        kp = keygen(g.account)
        directory.add_single(g.account, g.owner, kp.public)
        keys[g.owner][g.account] = kp
    return directory, keys


def inject_byzantine(nodes: list[Node], spec: ByzantineSpec, f: int) -> Node:
    """Replace ``nodes[spec.process]`` by the named Byzantine behaviour."""
    already = sum(1 for nd in nodes if nd.byzantine and nd.pid != spec.process)
    if already + 1 > f:
        raise BudgetExceeded(f"corruption budget f={f} exhausted")
    old = nodes[spec.process]
    cls = BEHAVIORS[spec.behavior]
    node = cls(old.pid, old.n, old.f, old.directory, old.keys,
               dict(old.ledger.balances), old.mutations, **spec.args)
    nodes[spec.process] = node
    return node


class Simulator:
    def __init__(self, config: NetworkConfig):
        config.validate()
        self.config = config
        self.rng = random.Random(config.seed)
        self.directory, keys = build_directory(config.genesis)
        genesis = {g.account: g.balance for g in config.genesis}
        self.genesis = genesis
        self.nodes: list[Node] = [
            Node(pid, config.n, config.f, self.directory, keys.get(pid, {}), genesis,
                 config.mutations)
            for pid in range(config.n)
        ]
        for spec in config.byzantine:
            inject_byzantine(self.nodes, spec, config.f)
        self.links: dict[tuple[int, int], deque[Envelope]] = {}
        self._active: list[tuple[int, int]] = []
        self._slot: dict[tuple[int, int], int] = {}
        self.scripts: list[deque[Invocation]] = [deque() for _ in range(config.n)]
        for inv in config.script:
            self.scripts[inv.process].append(inv)
        self.history = History(
            config.n, config.f, dict(genesis),
            {a.id: sorted(a.owners) for a in self.directory},
            sorted(config.byzantine_ids))
        self.metrics = Metrics(config.n, config.f)
        self.trace: list[tuple] = []
        self.steps = 0
        self._invocations: dict[str, Invocation] = {}
        self._op_kind: dict[str, str] = {inv.op_id: inv.op for inv in config.script}
        self._op_process: dict[str, int] = {inv.op_id: inv.process for inv in config.script}

    # -- links -----------------------------------------------------------------

    def _enqueue(self, env: Envelope) -> None:
        key = (env.src, env.dst)
        q = self.links.get(key)
        if q is None:
            q = self.links[key] = deque()
        if not q:
            self._slot[key] = len(self._active)
            self._active.append(key)
        q.append(env)

    def _dequeue(self, key: tuple[int, int]) -> Envelope:
        q = self.links[key]
        env = q.popleft()
        if not q:
            i = self._slot.pop(key)
            last = self._active.pop()
            if last != key:
                self._active[i] = last
                self._slot[last] = i
        return env

    def _flush(self, node: Node) -> None:
        for dst, payload, tag in node.outbox:
            if not tag:
                raise AssertionError(f"untagged message from process {node.pid}")
            env = Envelope(node.pid, dst, payload, tag, not node.byzantine)
            self._count(env)
            self._enqueue(env)
        node.outbox.clear()
        for op_id, result in node.responses:
            if not node.byzantine:
                inv = self._invocations[op_id]
                self.history.add(node.pid, RESPONSE, inv.op, op_id, payload=result)
        node.responses.clear()

    def _metrics_for(self, op_id: str) -> OpMetrics:
        m = self.metrics.ops.get(op_id)
        if m is None:
            m = OpMetrics(op_id, self._op_kind.get(op_id, "?"), self._op_process.get(op_id, -1))
            self.metrics.ops[op_id] = m
        return m

    def _count(self, env: Envelope) -> None:
        m = self._metrics_for(env.op_tag)
        m.msgs_total += 1
        if env.sent_by_correct and env.src != env.dst:
            m.msgs_correct += 1
            module = "broadcast" if isinstance(env.payload, BrbMessage) else "channel"
            m.by_module[module] += 1

    # -- scheduling --------------------------------------------------------------

    def _ready(self, early: bool = False) -> list[int]:
        ready = []
        for pid, script in enumerate(self.scripts):
            if not script:
                continue
            node, inv = self.nodes[pid], script[0]
            if node.idle and (early or inv.at <= self.steps) and node.condition_holds(inv.when):
                ready.append(pid)
        return ready

    def _links_enabled(self) -> list[tuple[int, int]]:
        cfg = self.config
        if cfg.scheduler != "starve" or self.steps >= cfg.starve_steps:
            return self._active
        return [k for k in self._active if k[1] != cfg.starve]

    def step(self) -> bool:
        """Run one event; False once quiescent."""
        ready = self._ready()
        links = self._links_enabled()
        if not ready and not links:
            links = self._active
        if not ready and not links:
            # nothing else can happen; ``at`` only delays, it never drops
            ready = self._ready(early=True)
        total = len(ready) + len(links)
        if total == 0:
            return False
        if self.steps >= self.config.step_cap:
            raise StepCapExceeded(f"not quiescent after {self.steps} steps")
        self.steps += 1
        r = self.rng.randrange(total)
        if r < len(ready):
            self._invoke(self.scripts[ready[r]].popleft())
        else:
            self._deliver(links[r - len(ready)])
        return True

    def _invoke(self, inv: Invocation) -> None:
        node = self.nodes[inv.process]
        args = node.resolve(inv)
        self.trace.append(("invoke", inv.op_id))
        self._invocations[inv.op_id] = inv
        self._metrics_for(inv.op_id)
        if not node.byzantine:
            self.history.add(node.pid, INVOCATION, inv.op, inv.op_id, args)
        node.invoke(inv, args)
        self._flush(node)

    def _deliver(self, key: tuple[int, int]) -> None:
        env = self._dequeue(key)
        self.trace.append(("deliver", env.src, env.dst))
        node = self.nodes[env.dst]
        saved, node.tag = node.tag, env.op_tag
        try:
            node.receive(env.src, env.payload)
        finally:
            node.tag = saved
        self._flush(node)

    def run(self) -> RunResult:
        while self.step():
            pass
        for nd in self.nodes:
            for tag in nd.broadcast_tags:
                self._metrics_for(tag).broadcasts += 1
        self._record_effects()
        # escrow accounts are registered lazily during the run
        self.history.owners = {a.id: sorted(a.owners) for a in self.directory}
        unstarted = [inv.op_id for script in self.scripts for inv in script]
        return RunResult(self.history, self.metrics, self.trace, self.nodes,
                         check_invariants(self), self.steps, unstarted)

    def _record_effects(self) -> None:
        """Append the ledger transfers of Byzantine broadcasters applied at
        correct replicas, in each broadcaster's order."""
        byz = self.config.byzantine_ids
        seen: dict[tuple[int, int], Any] = {}
        for nd in self.nodes:
            if nd.byzantine:
                continue
            for out in nd.ledger.applied_log:
                if out.broadcaster in byz:
                    seen.setdefault((out.broadcaster, out.seq), out.tx)
        for (pid, seq), tx in sorted(seen.items()):
            self.history.add(pid, EFFECT, "ledger.transfer", f"byz{pid}.tx{seq}",
                             {"source": tx.source, "outputs": [list(o) for o in tx.outputs]},
                             payload="success", byzantine=True)


def check_invariants(sim: Simulator) -> list[str]:
    """Safety properties of a finished run; returns one line per breach."""
    problems: list[str] = []
    correct = [nd for nd in sim.nodes if not nd.byzantine]
    total = sum(sim.genesis.values())
    for nd in correct:
        bal = nd.ledger.balances
        if sum(bal.values()) != total:
            problems.append(f"p{nd.pid}: conservation broken ({sum(bal.values())} != {total})")
        neg = sorted(a for a, v in bal.items() if v < 0)
        if neg:
            problems.append(f"p{nd.pid}: negative balance in {neg}")
    if correct:
        ref = correct[0]
        for nd in correct[1:]:
            if (nd.ledger.snapshot() != ref.ledger.snapshot()
                    or set(nd.ledger.applied) != set(ref.ledger.applied)):
                problems.append(f"p{nd.pid}: replica differs from p{ref.pid} at quiescence")
    for nd in correct:
        last: dict[tuple, int] = {}
        for key, epoch, bal_b in nd.channels.accepted:
            prev = last.get((key, epoch))
            if prev is not None and bal_b < prev:
                problems.append(f"p{nd.pid}: accepted balance of {key} fell {prev} -> {bal_b}")
            last[(key, epoch)] = bal_b
        for key, bal_b, applied in nd.channels.closes:
            if not applied:
                problems.append(f"p{nd.pid}: target_close of {key} at {bal_b} not applied")
    return problems


def run(config: NetworkConfig) -> RunResult:
    return Simulator(config).run()


def collect_metrics(result: RunResult) -> Metrics:
    return result.metrics
