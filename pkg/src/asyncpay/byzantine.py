"""Byzantine process behaviours.

Each behaviour is a :class:`~asyncpay.node.Node` subclass. Apart from its
attack, a Byzantine node relays other processes' broadcasts honestly, so the
attack is the only deviation being exercised. Attacks are scripted like
ordinary operations (``byz.*`` op names) and never appear in the history.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Any

from .broadcast import BrbMessage, Phase
from .channel import closing_tx
from .crypto import Signature, add_partial
from .ledger import TransferTx
from .node import Node

CHEATS = ("stale", "self_increase", "inflate", "theft", "no_deposit")


class CrashNode(Node):
    """Silent from the start: sends nothing, ignores everything."""

    byzantine = True
    behavior = "crash"

    def receive(self, src: int, payload: Any) -> None:
        return None

    def handlers(self):
        return {}

    def invoke(self, inv, args) -> None:
        self._finish(inv, None)


class DropperNode(Node):
    """Honest except that nothing is ever sent to ``victim``."""

    byzantine = True
    behavior = "dropper"

    def __init__(self, *args, victim: int, **kwargs):
        super().__init__(*args, **kwargs)
        self.victim = victim

    def send(self, dst: int, payload: Any) -> None:
        if dst != self.victim:
            super().send(dst, payload)


class _Attacker(Node):
    byzantine = True

    def own_account(self) -> str:
        return sorted(self.keys)[0]

    def handlers(self):
        table = super().handlers()
        table.update(self.attacks())
        return table

    def attacks(self) -> dict:
        return {}

    def resolve(self, inv):
        return dict(inv.args)

    def spend_all(self, account: str, dest: str, nonce: int,
                  deps: tuple[str, ...] = ()) -> TransferTx:
        amount = self.ledger.read(account)
        tx = TransferTx(account, ((dest, amount),), nonce, deps)
        return tx.signed_by(self.keys[account])


class EquivocatorNode(_Attacker):
    """Sends two conflicting INITs for one broadcast instance, each spending
    its whole balance to a different account, to the two halves of the
    system."""

    behavior = "equivocator"

    def attacks(self):
        return {"byz.equivocate": self.equivocate}

    def equivocate(self, dests: list[str]) -> None:
        acct = self.own_account()
        nonce = self.ledger.next_nonce(acct)
        deps = self.ledger.undeclared_credits(acct)
        first = self.spend_all(acct, dests[0], nonce, deps)
        second = self.spend_all(acct, dests[1 % len(dests)], nonce, deps)
        if first == second:
            second = replace(first, outputs=((dests[0], max(0, first.total - 1)),))
            second = second.signed_by(self.keys[acct])
        seq = self.brb.next_seq
        self.brb.next_seq += 1
        self.broadcast_tags.append(self.tag)
        half = self.n // 2
        for dst in range(self.n):
            payload = first if dst < half else second
            self.send(dst, BrbMessage(Phase.INIT, self.pid, seq, payload, self.pid))


class OverspenderNode(_Attacker):
    """Broadcasts, through honest broadcast, transfers that spend the same
    balance several times, one with a forged signature and one with a
    skipped nonce."""

    behavior = "overspender"

    def attacks(self):
        return {"byz.overspend": self.overspend}

    def overspend(self, dests: list[str]) -> None:
        acct = self.own_account()
        nonce = self.ledger.next_nonce(acct)
        deps = self.ledger.undeclared_credits(acct)
        for i, dest in enumerate(dests):
            self.brb_broadcast(self.spend_all(acct, dest, nonce + i, deps if i == 0 else ()))
        forged = self.spend_all(acct, dests[0], nonce + len(dests))
        forged = replace(forged, auth=Signature(acct, b"\x00" * 32))
        self.brb_broadcast(forged)
        self.brb_broadcast(self.spend_all(acct, dests[-1], nonce + 100))


class ChannelCheaterNode(_Attacker):
    """A channel source that opens a channel and then cheats its target.

    Variants, all after one honest payment of ``pay``:

    * ``stale``: replays the last transaction as a fresh payment of 1;
    * ``self_increase``: moves 1 back from the target's side to its own;
    * ``inflate``: credits the target more than the deposit;
    * ``theft``: broadcasts a half-signed escrow refund to itself;
    * ``no_deposit``: never deposits, but opens anyway with closing
      transactions that name no deposit.
    """

    behavior = "channel-cheater"

    def attacks(self):
        return {"byz.cheat": self.cheat}

    def cheat(self, target: str, amount: int, variant: str, pay: int = 2):
        if variant not in CHEATS:
            raise ValueError(f"unknown cheat {variant!r}")
        a = self.own_account()
        ch = self.channels.channel(a, target)
        escrow = self.directory[ch.escrow]
        dst = self.channels._owner(target)
        if variant == "no_deposit":
            deposit_id = ""
        else:
            deposit = TransferTx(a, ((ch.escrow, amount),), self.ledger.next_nonce(a),
                                 self.ledger.undeclared_credits(a)).signed_by(self.keys[a])
            if not (yield from self.ledger_invoke(deposit)):
                return None
            deposit_id = deposit.tx_id
        epoch = self.ledger.next_nonce(ch.escrow)

        def signed(bal_a: int, bal_b: int) -> TransferTx:
            tx = closing_tx(ch, escrow, bal_a, bal_b, epoch, deposit_id)
            return replace(tx, auth=add_partial(tx.auth, self.keys[a]))

        send = self.channels.send
        send(dst, "open", ch, signed(amount, 0), amount)
        paid = signed(amount - pay, pay)
        send(dst, "transfer", ch, paid, pay)
        if variant == "stale":
            send(dst, "transfer", ch, paid, 1)
        elif variant == "self_increase":
            send(dst, "transfer", ch, signed(amount - pay + 1, pay - 1), 1)
        elif variant == "inflate":
            send(dst, "transfer", ch, signed(amount - pay - 1, pay + amount), 1)
        elif variant == "theft":
            refund = TransferTx(ch.escrow, ((a, amount),), epoch, (deposit_id,))
            refund = refund.unsigned_multisig(escrow.key)
            self.brb_broadcast(replace(refund, auth=add_partial(refund.auth, self.keys[a])))
        return None


BEHAVIORS = {
    "crash": CrashNode,
    "dropper": DropperNode,
    "equivocator": EquivocatorNode,
    "overspender": OverspenderNode,
    "channel-cheater": ChannelCheaterNode,
}
