from dataclasses import replace

import pytest

from asyncpay.broadcast import BrbMessage
from asyncpay.channel import FAIL, OK, ChannelMsg, closing_tx, validate_tx
from asyncpay.crypto import add_partial
from asyncpay.node import Mutations

from conftest import Cluster

ESC = "ms[a,b]"


def cluster(a_balance=20, mutations=None):
    return Cluster(4, 1, {"a": (0, a_balance), "b": (1, 0), "c": (2, 0), "d": (3, 0)},
                   mutations)


def opened(amount=11, a_balance=20):
    c = cluster(a_balance)
    op = c.call(0, "channel.open", source="a", target="b", amount=amount)
    c.pump()
    assert c.results[op] == OK
    return c


def target_tx(c):
    return c.nodes[1].channels.target[("a", "b")].tx


def test_open_moves_deposit_to_escrow():
    c = opened(amount=3, a_balance=5)
    for p in range(4):
        assert c.read(p, "a") == 2 and c.read(p, ESC) == 3
    view = c.nodes[0].channels.source[("a", "b")]
    assert (view.bal_a, view.bal_b) == (3, 0)
    assert target_tx(c).outputs == (("a", 3), ("b", 0))


def test_open_twice_fails():
    c = opened()
    op = c.call(0, "channel.open", source="a", target="b", amount=1)
    assert c.results[op] == FAIL


def test_open_without_funds_fails_without_broadcast():
    c = cluster(a_balance=1)
    op = c.call(0, "channel.open", source="a", target="b", amount=2)
    assert c.results[op] == FAIL and c.queue == []


def test_open_by_non_owner_fails():
    c = cluster()
    op = c.call(1, "channel.open", source="a", target="b", amount=2)
    assert c.results[op] == FAIL


def test_open_message_waits_for_escrow_credit():
    c = cluster()
    c.call(0, "channel.open", source="a", target="b", amount=4)
    # everything except broadcast traffic into b
    c.pump(lambda s, d, m: not (d == 1 and isinstance(m, BrbMessage)))
    assert c.read(1, ESC) == 0
    assert ("a", "b") not in c.nodes[1].channels.target
    assert c.nodes[1].channels._inboxes[0].buffer  # the open is pended
    c.pump()
    assert target_tx(c).outputs == (("a", 4), ("b", 0))


def test_skip_open_gate_mutant_accepts_early():
    c = cluster(mutations=Mutations(skip_open_gate=True))
    c.call(0, "channel.open", source="a", target="b", amount=4)
    c.pump(lambda s, d, m: not (d == 1 and isinstance(m, BrbMessage)))
    assert c.read(1, ESC) == 0
    assert ("a", "b") in c.nodes[1].channels.target


def _deliver_to_b(c, msg):
    c.nodes[1].channels.receive(0, msg)


def test_open_without_source_signature_dropped():
    c = cluster()
    c.call(0, "channel.open", source="a", target="b", amount=4)
    chan = c.nodes[1].channels
    c.pump(lambda s, d, m: isinstance(m, BrbMessage))
    tx = next(m.tx for _, _, m in c.queue if isinstance(m, ChannelMsg))
    c.queue.clear()
    unsigned = replace(tx, auth=replace(tx.auth, partials=()))
    _deliver_to_b(c, ChannelMsg("open", "a", "b", unsigned, 4, 1))
    assert ("a", "b") not in chan.target and chan.dropped == 1


def test_duplicate_open_dropped():
    c = cluster()
    c.call(0, "channel.open", source="a", target="b", amount=4)
    c.pump(lambda s, d, m: isinstance(m, BrbMessage))
    msg = next(m for _, _, m in c.queue if isinstance(m, ChannelMsg))
    c.pump()
    _deliver_to_b(c, replace(msg, seq=2))
    assert c.nodes[1].channels.dropped == 1


def test_worked_example_pay_one_from_10_1():
    # deposit 11, channel at (10, 1), pay 1 -> stored closing tx (9, 2)
    c = opened(amount=11)
    c.call(0, "channel.transfer", source="a", target="b", amount=1)
    c.pump()
    assert target_tx(c).outputs == (("a", 10), ("b", 1))
    sent = len(c.queue)
    c.call(0, "channel.transfer", source="a", target="b", amount=1)
    assert len(c.queue) == sent + 1
    c.pump()
    assert target_tx(c).outputs == (("a", 9), ("b", 2))
    view = c.nodes[0].channels.source[("a", "b")]
    assert (view.bal_a, view.bal_b) == (9, 2)


def test_transfer_more_than_balance_sends_nothing():
    c = opened(amount=3)
    op = c.call(0, "channel.transfer", source="a", target="b", amount=4)
    assert c.queue == [] and c.results[op] is None


def test_k_transfers_are_k_messages_and_no_broadcast():
    c = opened(amount=50, a_balance=50)
    for _ in range(25):
        c.call(0, "channel.transfer", source="a", target="b", amount=2)
    assert len(c.queue) == 25
    assert all(isinstance(m, ChannelMsg) and d == 1 for _, d, m in c.queue)
    c.pump()
    assert target_tx(c).outputs == (("a", 0), ("b", 50))


def _signed(c, bal_a, bal_b):
    esc = c.directory[ESC]
    tx = target_tx(c)
    fresh = closing_tx(c.nodes[1].channels.channel("a", "b"), esc, bal_a, bal_b,
                       tx.nonce, tx.deps[0])
    return replace(fresh, auth=add_partial(fresh.auth, c.nodes[0].keys["a"]))


def test_target_rejects_stale_and_self_increasing_txs():
    c = opened(amount=11)
    c.call(0, "channel.transfer", source="a", target="b", amount=1)
    c.pump()
    chan = c.nodes[1].channels
    for bal, amt in (((10, 1), 1), ((11, 0), 1), ((9, 3), 1), ((5, 6), -5)):
        _deliver_to_b(c, ChannelMsg("transfer", "a", "b", _signed(c, *bal), amt,
                                    chan._inboxes[0].expected))
    assert target_tx(c).outputs == (("a", 10), ("b", 1))
    assert chan.dropped == 4


def test_nonmonotonic_mutant_accepts_inflation():
    c = Cluster(4, 1, {"a": (0, 20), "b": (1, 0), "c": (2, 0), "d": (3, 0)},
                Mutations(accept_nonmonotonic=True))
    c.call(0, "channel.open", source="a", target="b", amount=5)
    c.pump()
    chan = c.nodes[1].channels
    _deliver_to_b(c, ChannelMsg("transfer", "a", "b", _signed(c, 0, 9), 1,
                                chan._inboxes[0].expected))
    assert target_tx(c).outputs == (("a", 0), ("b", 9))


def test_target_close_realises_latest_balance():
    c = opened(amount=11, a_balance=11)
    c.call(0, "channel.transfer", source="a", target="b", amount=1)
    c.call(0, "channel.transfer", source="a", target="b", amount=1)
    c.pump()
    before = {x: c.read(2, x) for x in ("a", "b", ESC)}
    op = c.call(1, "channel.target_close", source="a", target="b", balance=2)
    c.pump()
    assert c.results[op] == OK
    after = {x: c.read(2, x) for x in ("a", "b", ESC)}
    assert {x: after[x] - before[x] for x in after} == {"a": 9, "b": 2, ESC: -11}
    assert after[ESC] == 0
    assert ("a", "b") not in c.nodes[0].channels.source
    assert c.nodes[1].channels.closes == [(("a", "b"), 2, True)]


def test_target_close_guards():
    c = cluster()
    op = c.call(1, "channel.target_close", source="a", target="b", balance=0)
    assert c.results[op] == FAIL
    c = opened()
    op = c.call(1, "channel.target_close", source="a", target="b", balance=3)
    assert c.results[op] == FAIL
    op = c.call(0, "channel.target_close", source="a", target="b", balance=0)
    assert c.results[op] == FAIL


def test_close_message_waits_for_escrow_drain_then_reopen():
    c = opened(amount=4)
    c.call(0, "channel.transfer", source="a", target="b", amount=1)
    c.pump()
    c.call(1, "channel.target_close", source="a", target="b", balance=1)
    # hold broadcast traffic into a, let the direct close message through
    c.pump(lambda s, d, m: not (d == 0 and isinstance(m, BrbMessage)))
    assert ("a", "b") in c.nodes[0].channels.source
    c.pump()
    assert ("a", "b") not in c.nodes[0].channels.source
    op = c.call(0, "channel.open", source="a", target="b", amount=2)
    c.pump()
    assert c.results[op] == OK
    assert target_tx(c).nonce == 2  # new epoch


def test_forged_close_dropped():
    c = opened(amount=4)
    tx = target_tx(c)
    # only the source's partial, not the target's
    c.nodes[0].channels.receive(1, ChannelMsg("close", "a", "b", tx, None, 1))
    # escrow still funded: held by the gate; once drained it is dropped
    assert ("a", "b") in c.nodes[0].channels.source
    chan = c.nodes[0].channels
    assert chan._handle(1, ChannelMsg("close", "a", "b", tx, None, 1)) is False


def test_old_epoch_tx_not_accepted_after_reopen():
    c = opened(amount=4)
    old = target_tx(c)
    c.call(1, "channel.target_close", source="a", target="b", balance=0)
    c.pump()
    c.call(0, "channel.open", source="a", target="b", amount=4)
    c.pump()
    chan = c.nodes[1].channels
    _deliver_to_b(c, ChannelMsg("transfer", "a", "b", old, 0, chan._inboxes[0].expected))
    assert target_tx(c).nonce == 2 and chan.dropped == 1


def test_validate_tx():
    c = opened(amount=11)
    ch = c.nodes[1].channels.channel("a", "b")
    good = target_tx(c)
    assert validate_tx(good, ch, "a", c.directory, deposit=11)
    assert not validate_tx(good, ch, "b", c.directory)
    assert not validate_tx(_signed(c, 5, 5), ch, "a", c.directory, deposit=11)
    other = c.nodes[1].channels.channel("a", "c")
    assert not validate_tx(good, other, "a", c.directory)
    assert not validate_tx("junk", ch, "a", c.directory)
