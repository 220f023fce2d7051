"""Replicated asset-transfer ledger.

Each replica applies transfers delivered by source-ordered broadcast. Reads are
local and cost no messages; a transfer costs one broadcast.

Validation must give the same verdict at every correct replica even though
transfers from different sources arrive in different orders. A transfer
therefore lists, in ``deps``, the ids of the incoming credits its source is
relying on. A replica holds a transfer until every dependency is applied and
then checks it against the source's *spendable* balance: genesis balance plus
declared credits minus earlier debits. That value depends only on the source's
own, source-ordered, transfers and the credits they name, so every correct
replica reaches the same verdict. ``read`` reports the full balance, which
also counts credits not yet declared; the full balance is never below the
spendable one, so applying a valid transfer never makes a balance negative.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Union

from . import codec
from .crypto import (
    KeyPair,
    MultisigKey,
    PartialMultisig,
    PublicKey,
    Signature,
    has_valid_partial,
    is_complete,
    sign,
    verify,
)

Amount = int
Auth = Union[Signature, PartialMultisig, None]


@dataclass(frozen=True)
class Account:
    id: str
    owners: frozenset[int]
    key: PublicKey | MultisigKey

    @property
    def is_multi(self) -> bool:
        return isinstance(self.key, MultisigKey)


class Directory:
    """Public account information every process knows: keys and owners."""

    def __init__(self) -> None:
        self._accounts: dict[str, Account] = {}

    def add_single(self, account_id: str, owner: int, key: PublicKey) -> Account:
        acct = Account(account_id, frozenset({owner}), key)
        self._accounts[account_id] = acct
        return acct

    def escrow(self, a: str, b: str) -> Account:
        """The 2-of-2 account jointly controlled by the owners of ``a`` and ``b``."""
        first, second = self[a], self[b]
        mk = MultisigKey.of([first.key, second.key])
        existing = self._accounts.get(mk.canonical_id)
        if existing is None:
            existing = Account(mk.canonical_id, first.owners | second.owners, mk)
            self._accounts[mk.canonical_id] = existing
        return existing

    def get(self, account_id: str) -> Account | None:
        return self._accounts.get(account_id)

    def __getitem__(self, account_id: str) -> Account:
        return self._accounts[account_id]

    def __contains__(self, account_id: str) -> bool:
        return account_id in self._accounts

    def __iter__(self):
        return iter(self._accounts.values())

    def owners(self, account_id: str) -> frozenset[int]:
        acct = self._accounts.get(account_id)
        return acct.owners if acct else frozenset()


@dataclass(frozen=True)
class TransferTx:
    source: str
    outputs: tuple[tuple[str, Amount], ...]
    nonce: int
    deps: tuple[str, ...] = ()
    auth: Auth = field(default=None, compare=True)

    def body(self) -> bytes:
        return codec.encode(("transfer", self.source, self.outputs, self.nonce, self.deps))

    @property
    def tx_id(self) -> str:
        return hashlib.sha256(self.body()).hexdigest()[:20]

    @property
    def total(self) -> Amount:
        return sum(amt for _, amt in self.outputs)

    def credit_to(self, account_id: str) -> Amount:
        return sum(amt for dst, amt in self.outputs if dst == account_id)

    def signed_by(self, key: KeyPair) -> "TransferTx":
        return replace(self, auth=sign(self.body(), key))

    def unsigned_multisig(self, mk: MultisigKey) -> "TransferTx":
        return replace(self, auth=PartialMultisig(mk, self.body()))


def well_formed(outputs: Iterable) -> bool:
    outputs = tuple(outputs)
    if not outputs:
        return False
    for item in outputs:
        if not (isinstance(item, tuple) and len(item) == 2):
            return False
        dst, amt = item
        if not isinstance(dst, str) or type(amt) is not int or amt < 0:
            return False
    return True


@dataclass
class Outcome:
    broadcaster: int
    seq: int
    tx: TransferTx
    applied: bool
    reason: str = ""


class LedgerReplica:
    """One process's copy of the ledger.

    ``skip_multisig_check`` is a deliberate protocol mutant: a multisig
    transfer is accepted with any single valid partial.
    """

    def __init__(self, directory: Directory, genesis: dict[str, Amount], *,
                 skip_multisig_check: bool = False):
        self.directory = directory
        self.balances: dict[str, Amount] = dict(genesis)
        self.total = sum(genesis.values())
        self.skip_multisig_check = skip_multisig_check
        self.applied_nonce: dict[str, int] = {}
        self._spendable: dict[str, Amount] = dict(genesis)
        # tx_id -> tx for every applied transfer
        self.applied: dict[str, TransferTx] = {}
        self.applied_log: list[Outcome] = []
        self.dropped: list[Outcome] = []
        # account -> applied credit tx ids not yet named in a deps list
        self._undeclared: dict[str, list[str]] = {}
        self._declared: set[tuple[str, str]] = set()
        self._queues: dict[str, deque[tuple[int, int, TransferTx]]] = {}

    # -- reads ---------------------------------------------------------------

    def read(self, account_id: str) -> Amount:
        return self.balances.get(account_id, 0)

    def undeclared_credits(self, account_id: str) -> tuple[str, ...]:
        return tuple(self._undeclared.get(account_id, ()))

    def next_nonce(self, account_id: str) -> int:
        return self.applied_nonce.get(account_id, 0) + 1

    def snapshot(self) -> dict[str, Amount]:
        return {k: v for k, v in sorted(self.balances.items()) if v or k in self.applied_nonce}

    # -- validation ------------------------------------------------------------

    def check(self, tx: TransferTx, broadcaster: int) -> str:
        """Return "" if ``tx`` is valid now, else the reason it is not.

        Assumes every dependency is already applied; callers check that first.
        """
        acct = self.directory.get(tx.source)
        if acct is None:
            return "unknown source"
        if broadcaster not in acct.owners:
            return "broadcaster does not own source"
        if not well_formed(tx.outputs):
            return "malformed outputs"
        if tx.nonce != self.next_nonce(tx.source):
            return "bad nonce"
        if not self._auth_ok(tx, acct):
            return "bad authorisation"
        if len(set(tx.deps)) != len(tx.deps):
            return "repeated dependency"
        credits = 0
        for dep in tx.deps:
            dep_tx = self.applied.get(dep)
            amount = dep_tx.credit_to(tx.source) if dep_tx else 0
            if amount == 0 or (tx.source, dep) in self._declared:
                return "invalid dependency"
            credits += amount
        if self._spendable.get(tx.source, 0) + credits < tx.total:
            return "insufficient balance"
        return ""

    def _auth_ok(self, tx: TransferTx, acct: Account) -> bool:
        body = tx.body()
        if isinstance(acct.key, PublicKey):
            return isinstance(tx.auth, Signature) and verify(body, tx.auth, acct.key)
        p = tx.auth
        if not isinstance(p, PartialMultisig) or p.key != acct.key or p.message != body:
            return False
        if self.skip_multisig_check:
            return any(has_valid_partial(p, pk.key_id) for pk in acct.key.members)
        return is_complete(p, acct.key)

    def deps_ready(self, tx: TransferTx) -> bool:
        return all(dep in self.applied for dep in tx.deps)

    def admissible(self, tx: TransferTx, invoker: int) -> bool:
        """Local pre-check a correct invoker runs before broadcasting ``tx``."""
        return self.deps_ready(tx) and self.check(tx, invoker) == ""

    # -- application -----------------------------------------------------------

    def deliver(self, tx: TransferTx, broadcaster: int, seq: int) -> list[Outcome]:
        """Queue a delivered transfer and apply whatever became valid.

        Returns outcomes for every transfer decided by this call, including
        held transfers from other sources released by new credits.
        """
        if not isinstance(tx, TransferTx):
            return []
        self._queues.setdefault(tx.source, deque()).append((broadcaster, seq, tx))
        return self._drain({tx.source})

    def _drain(self, dirty: set[str]) -> list[Outcome]:
        outcomes: list[Outcome] = []
        while dirty:
            source = min(dirty)
            dirty.discard(source)
            queue = self._queues.get(source)
            while queue:
                broadcaster, seq, tx = queue[0]
                if not self.deps_ready(tx):
                    break
                queue.popleft()
                reason = self.check(tx, broadcaster)
                outcome = Outcome(broadcaster, seq, tx, not reason, reason)
                outcomes.append(outcome)
                if reason:
                    self.dropped.append(outcome)
                    continue
                self._apply(tx)
                self.applied_log.append(outcome)
                # any held head may name this tx as a dependency
                dirty.update(s for s, q in self._queues.items() if q and s != source)
        return outcomes

    def _apply(self, tx: TransferTx) -> None:
        src = tx.source
        credits = 0
        for dep in tx.deps:
            credits += self.applied[dep].credit_to(src)
            self._declared.add((src, dep))
            pending = self._undeclared.get(src)
            if pending and dep in pending:
                pending.remove(dep)
        self._spendable[src] = self._spendable.get(src, 0) + credits - tx.total
        self.balances[src] = self.balances.get(src, 0) - tx.total
        self.applied_nonce[src] = tx.nonce
        self.applied[tx.tx_id] = tx
        for dst, amt in tx.outputs:
            self.balances[dst] = self.balances.get(dst, 0) + amt
            if amt and tx.tx_id not in self._undeclared.setdefault(dst, []):
                self._undeclared[dst].append(tx.tx_id)
        if self.balances[src] < 0 or sum(self.balances.values()) != self.total:
            raise AssertionError(f"ledger invariant broken by {tx.tx_id}")

    def blocked(self) -> int:
        """Transfers still waiting on a dependency."""
        return sum(len(q) for q in self._queues.values())
