"""Unidirectional payment channels closed only by the target.

The source deposits into the 2-of-2 escrow account of the channel with one
ledger transfer, then pays by handing the target ever newer closing
transactions that split the escrow between both sides. Each carries only the
source's partial signature. The target completes the latest one with its own
partial and submits it to the ledger to close. Between open and close every
payment is a single point-to-point message.

Closing transactions use the escrow's ledger nonce as the channel epoch, so a
closing transaction from an earlier opening of the same channel can never be
replayed.

Operations that touch the ledger are generators: they yield while the ledger
transfer is in flight and are resumed by the owning node (see ``node.py``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any, Generator

from .crypto import PartialMultisig, add_partial, has_valid_partial
from .ledger import Account, Amount, Directory, TransferTx, well_formed

if TYPE_CHECKING:
    from .node import Node

OK = "success"
FAIL = "fail"


@dataclass(frozen=True)
class ChannelId:
    a: str
    b: str
    escrow: str

    @classmethod
    def of(cls, directory: Directory, a: str, b: str) -> "ChannelId":
        return cls(a, b, directory.escrow(a, b).id)

    @property
    def key(self) -> tuple[str, str]:
        return (self.a, self.b)


@dataclass
class SourceView:
    bal_a: Amount
    bal_b: Amount
    epoch: int
    deposit_id: str
    deposit: Amount


@dataclass
class TargetView:
    tx: TransferTx
    deposit: Amount

    @property
    def balances(self) -> tuple[Amount, Amount]:
        return self.tx.outputs[0][1], self.tx.outputs[1][1]


@dataclass(frozen=True)
class ChannelMsg:
    kind: str  # "open" | "transfer" | "close"
    a: str
    b: str
    tx: Any
    amt: Amount | None
    seq: int


def closing_tx(ch: ChannelId, escrow: Account, bal_a: Amount, bal_b: Amount,
               epoch: int, deposit_id: str) -> TransferTx:
    deps = (deposit_id,) if deposit_id else ()
    tx = TransferTx(ch.escrow, ((ch.a, bal_a), (ch.b, bal_b)), epoch, deps)
    return tx.unsigned_multisig(escrow.key)


def validate_tx(tx: Any, ch: ChannelId, signer: str, directory: Directory,
                deposit: Amount | None = None) -> bool:
    """True iff ``tx`` spends the channel escrow to (a, b) and carries the
    valid partial signature of ``signer``'s key.

    With ``deposit`` given, the two outputs must also add up to it.
    """
    if not isinstance(tx, TransferTx) or tx.source != ch.escrow:
        return False
    if len(tx.outputs) != 2 or not well_formed(tx.outputs):
        return False
    (dst_a, amt_a), (dst_b, amt_b) = tx.outputs
    if (dst_a, dst_b) != (ch.a, ch.b):
        return False
    escrow = directory.get(ch.escrow)
    signer_acct = directory.get(signer)
    p = tx.auth
    if escrow is None or signer_acct is None or not isinstance(p, PartialMultisig):
        return False
    if p.key != escrow.key or p.message != tx.body():
        return False
    if not has_valid_partial(p, signer_acct.key.key_id):
        return False
    return deposit is None or amt_a + amt_b == deposit


@dataclass
class _Inbox:
    expected: int = 1
    buffer: dict[int, ChannelMsg] = field(default_factory=dict)


class ChannelEndpoint:
    """Both roles of the channel protocol for one process.

    ``skip_open_gate`` and ``accept_nonmonotonic`` switch on protocol mutants
    used to show the checker catches them.
    """

    def __init__(self, node: "Node", *, skip_open_gate: bool = False,
                 accept_nonmonotonic: bool = False):
        self.node = node
        self.skip_open_gate = skip_open_gate
        self.accept_nonmonotonic = accept_nonmonotonic
        self.source: dict[tuple[str, str], SourceView] = {}
        self.target: dict[tuple[str, str], TargetView] = {}
        self._send_seq: dict[int, int] = {}
        self._inboxes: dict[int, _Inbox] = {}
        # (channel key, epoch, bal_b) every time the target stores a tx
        self.accepted: list[tuple[tuple[str, str], int, Amount]] = []
        # (channel key, bal_b, ledger transfer applied?) for every target close
        self.closes: list[tuple[tuple[str, str], Amount, bool]] = []
        self.dropped = 0

    # -- helpers -------------------------------------------------------------

    @property
    def directory(self) -> Directory:
        return self.node.directory

    def _owns(self, account: str) -> bool:
        return account in self.node.keys and self.node.pid in self.directory.owners(account)

    def _owner(self, account: str) -> int | None:
        owners = self.directory.owners(account)
        return min(owners) if len(owners) == 1 else None

    def send(self, dst: int, kind: str, ch: ChannelId, tx: Any, amt: Amount | None) -> None:
        seq = self._send_seq.get(dst, 0) + 1
        self._send_seq[dst] = seq
        self.node.send(dst, ChannelMsg(kind, ch.a, ch.b, tx, amt, seq))

    def channel(self, a: str, b: str) -> ChannelId | None:
        if a not in self.directory or b not in self.directory or a == b:
            return None
        if self.directory[a].is_multi or self.directory[b].is_multi:
            return None
        return ChannelId.of(self.directory, a, b)

    def target_balance(self, a: str, b: str) -> Amount | None:
        view = self.target.get((a, b))
        return view.balances[1] if view else None

    # -- source side -----------------------------------------------------------

    def open(self, a: str, b: str, amt: Amount) -> Generator[Any, Any, str]:
        ledger = self.node.ledger
        ch = self.channel(a, b)
        if (ch is None or not self._owns(a) or ch.key in self.source
                or type(amt) is not int or amt < 0 or ledger.read(a) < amt):
            return FAIL
        escrow = self.directory[ch.escrow]
        deposit = TransferTx(a, ((ch.escrow, amt),), ledger.next_nonce(a),
                             ledger.undeclared_credits(a)).signed_by(self.node.keys[a])
        if not (yield from self.node.ledger_invoke(deposit)):
            return FAIL
        epoch = ledger.next_nonce(ch.escrow)
        deposit_id = deposit.tx_id if amt else ""
        tx = closing_tx(ch, escrow, amt, 0, epoch, deposit_id)
        tx = _with_partial(tx, self.node.keys[a])
        self.send(self._owner(b), "open", ch, tx, amt)
        self.source[ch.key] = SourceView(amt, 0, epoch, deposit_id, amt)
        return OK

    def transfer(self, a: str, b: str, amt: Amount) -> None:
        ch = self.channel(a, b)
        if ch is None or not self._owns(a) or ch.key not in self.source:
            return None
        view = self.source[ch.key]
        if type(amt) is not int or amt < 0 or view.bal_a < amt:
            return None
        new_a, new_b = view.bal_a - amt, view.bal_b + amt
        escrow = self.directory[ch.escrow]
        tx = closing_tx(ch, escrow, new_a, new_b, view.epoch, view.deposit_id)
        self.send(self._owner(b), "transfer", ch, _with_partial(tx, self.node.keys[a]), amt)
        view.bal_a, view.bal_b = new_a, new_b
        return None

    # -- target side -----------------------------------------------------------

    def target_close(self, a: str, b: str, bal_b: Amount) -> Generator[Any, Any, str]:
        ch = self.channel(a, b)
        if ch is None or not self._owns(b) or ch.key not in self.target:
            return FAIL
        view = self.target[ch.key]
        if view.balances[1] != bal_b:
            return FAIL
        tx = _with_partial(view.tx, self.node.keys[b])
        applied = yield from self.node.ledger_invoke(tx)
        self.closes.append((ch.key, bal_b, applied))
        del self.target[ch.key]
        self.send(self._owner(a), "close", ch, tx, None)
        return OK

    # -- message handling --------------------------------------------------------

    def receive(self, src: int, msg: ChannelMsg) -> None:
        if not isinstance(msg, ChannelMsg) or msg.seq < 1:
            return
        inbox = self._inboxes.setdefault(src, _Inbox())
        if msg.seq >= inbox.expected:
            inbox.buffer.setdefault(msg.seq, msg)
        self._drain(src, inbox)

    def retry(self) -> None:
        """Re-examine messages held back by a ledger gate."""
        for src, inbox in self._inboxes.items():
            if inbox.buffer:
                self._drain(src, inbox)

    def _drain(self, src: int, inbox: _Inbox) -> None:
        while inbox.expected in inbox.buffer:
            msg = inbox.buffer[inbox.expected]
            if not self._handle(src, msg):
                return
            del inbox.buffer[inbox.expected]
            inbox.expected += 1

    def _handle(self, src: int, msg: ChannelMsg) -> bool:
        """Process ``msg``; False means its ledger gate is not open yet."""
        ch = self.channel(msg.a, msg.b)
        if ch is None or msg.kind not in ("open", "transfer", "close"):
            self.dropped += 1
            return True
        read = self.node.ledger.read
        if msg.kind == "open":
            if not self.skip_open_gate and read(ch.escrow) != msg.amt:
                return False
            ok = self._accept_open(src, ch, msg)
        elif msg.kind == "transfer":
            ok = self._accept_transfer(src, ch, msg)
        else:
            if read(ch.escrow) != 0:
                return False
            ok = self._accept_close(src, ch, msg)
        if not ok:
            self.dropped += 1
        return True

    def _accept_open(self, src: int, ch: ChannelId, msg: ChannelMsg) -> bool:
        tx, amt = msg.tx, msg.amt
        if not self._owns(ch.b) or src != self._owner(ch.a) or ch.key in self.target:
            return False
        if not validate_tx(tx, ch, ch.a, self.directory, deposit=amt):
            return False
        if tx.outputs[1][1] != 0 or tx.nonce != self.node.ledger.next_nonce(ch.escrow):
            return False
        self.target[ch.key] = TargetView(tx, amt)
        self.accepted.append((ch.key, tx.nonce, 0))
        return True

    def _accept_transfer(self, src: int, ch: ChannelId, msg: ChannelMsg) -> bool:
        tx, amt = msg.tx, msg.amt
        view = self.target.get(ch.key)
        if not self._owns(ch.b) or src != self._owner(ch.a) or view is None:
            return False
        if self.accept_nonmonotonic:
            if not validate_tx(tx, ch, ch.a, self.directory):
                return False
        else:
            if not validate_tx(tx, ch, ch.a, self.directory, deposit=view.deposit):
                return False
            if type(amt) is not int or amt < 0:
                return False
            old_a, old_b = view.balances
            new_a, new_b = tx.outputs[0][1], tx.outputs[1][1]
            if new_a != old_a - amt or new_b != old_b + amt:
                return False
        if tx.nonce != view.tx.nonce or tx.deps != view.tx.deps:
            return False
        view.tx = tx
        self.accepted.append((ch.key, tx.nonce, view.balances[1]))
        return True

    def _accept_close(self, src: int, ch: ChannelId, msg: ChannelMsg) -> bool:
        view = self.source.get(ch.key)
        if not self._owns(ch.a) or src != self._owner(ch.b) or view is None:
            return False
        if not validate_tx(msg.tx, ch, ch.b, self.directory) or msg.tx.nonce != view.epoch:
            return False
        del self.source[ch.key]
        return True


def _with_partial(tx: TransferTx, key) -> TransferTx:
    return replace(tx, auth=add_partial(tx.auth, key))
