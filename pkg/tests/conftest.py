import pytest

from asyncpay.crypto import keygen
from asyncpay.ledger import Directory, LedgerReplica


class Accounts:
    """Single-owner accounts ``name -> owner pid`` with their keys."""

    def __init__(self, owners):
        self.directory = Directory()
        self.keys = {}
        for name, owner in owners.items():
            kp = keygen(name)
            self.keys[name] = kp
            self.directory.add_single(name, owner, kp.public)

    def replica(self, genesis, **kw):
        return LedgerReplica(self.directory, genesis, **kw)


@pytest.fixture
def accts():
    return Accounts({"a": 0, "b": 1, "c": 2, "d": 3})


class Cluster:
    """Nodes wired by hand: messages wait in one global FIFO list until
    :meth:`pump` delivers those the filter allows."""

    def __init__(self, n, f, genesis, mutations=None):
        from asyncpay.node import Mutations, Node
        from asyncpay.simnet import GenesisAccount, build_directory

        accounts = [GenesisAccount(a, owner, bal) for a, (owner, bal) in genesis.items()]
        self.directory, keys = build_directory(accounts)
        balances = {a: bal for a, (_, bal) in genesis.items()}
        self.nodes = [Node(p, n, f, self.directory, keys.get(p, {}), balances,
                           mutations or Mutations()) for p in range(n)]
        self.queue = []
        self.results = {}
        self.count = 0

    def call(self, pid, op, **args):
        from asyncpay.node import Invocation

        self.count += 1
        inv = Invocation(f"p{pid}.{self.count}", pid, op, args)
        node = self.nodes[pid]
        node.invoke(inv, node.resolve(inv))
        self._collect(node)
        return inv.op_id

    def _collect(self, node):
        for dst, payload, tag in node.outbox:
            self.queue.append((node.pid, dst, payload))
        node.outbox.clear()
        for op_id, result in node.responses:
            self.results[op_id] = result
        node.responses.clear()

    def pump(self, allow=lambda src, dst, payload: True):
        delivered = 0
        while True:
            for i, (src, dst, payload) in enumerate(self.queue):
                if allow(src, dst, payload):
                    break
            else:
                return delivered
            del self.queue[i]
            node = self.nodes[dst]
            node.receive(src, payload)
            self._collect(node)
            delivered += 1

    def read(self, pid, account):
        return self.nodes[pid].ledger.read(account)
