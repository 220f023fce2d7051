import random

import pytest

from asyncpay.broadcast import BrbMessage, BrbNode, Phase, echo_quorum, message_count


def run_network(n, f, initial, seed, byzantine=(), silent=()):
    """Deliver ``initial`` (src, dst, msg) triples and everything they cause,
    in a seeded random order with FIFO links. Byzantine and silent processes
    receive but never reply."""
    rng = random.Random(seed)
    nodes = {p: BrbNode(p, n, f) for p in range(n)}
    links = {}
    sent_by_correct = 0
    delivered = {p: [] for p in range(n)}

    def enqueue(src, dst, msg):
        nonlocal sent_by_correct
        links.setdefault((src, dst), []).append(msg)
        if src not in byzantine and src != dst:
            sent_by_correct += 1

    for src, dst, msg in initial:
        enqueue(src, dst, msg)
    while any(links.values()):
        key = rng.choice(sorted(k for k, q in links.items() if q))
        msg = links[key].pop(0)
        src, dst = key
        if dst in byzantine or dst in silent:
            continue
        out, deliveries = nodes[dst].handle(src, msg)
        for d, m in out:
            enqueue(dst, d, m)
        delivered[dst] += deliveries
    return nodes, delivered, sent_by_correct


def test_thresholds():
    assert echo_quorum(4, 1) == 3
    assert echo_quorum(7, 2) == 5
    assert echo_quorum(10, 3) == 7
    node = BrbNode(0, 4, 1)
    assert (node.echo_threshold, node.ready_threshold, node.deliver_threshold) == (3, 2, 3)


def test_broadcast_addresses_everyone_with_increasing_seq():
    node = BrbNode(2, 4, 1)
    seq, out = node.broadcast("x")
    assert seq == 1
    assert sorted(d for d, _ in out) == [0, 1, 2, 3]
    assert all(m.phase is Phase.INIT and m.seq == 1 and m.origin == 2 for _, m in out)
    assert node.broadcast("y")[0] == 2


def test_three_echoes_trigger_ready_at_n4():
    node = BrbNode(0, 4, 1)
    for relayer in (1, 2):
        out, _ = node.handle(relayer, BrbMessage(Phase.ECHO, 3, 1, "x", relayer))
        assert out == []
    out, _ = node.handle(3, BrbMessage(Phase.ECHO, 3, 1, "x", 3))
    assert {m.phase for _, m in out} == {Phase.READY} and len(out) == 4


def test_f_plus_one_readies_amplify_and_2f_plus_one_deliver():
    node = BrbNode(0, 4, 1)
    out, dl = node.handle(1, BrbMessage(Phase.READY, 3, 1, "x", 1))
    assert out == [] and dl == []
    out, dl = node.handle(2, BrbMessage(Phase.READY, 3, 1, "x", 2))
    assert len(out) == 4 and dl == []
    _, dl = node.handle(3, BrbMessage(Phase.READY, 3, 1, "x", 3))
    assert [(d.origin, d.seq, d.payload) for d in dl] == [(3, 1, "x")]


def test_duplicate_votes_and_spoofed_relayers_ignored():
    node = BrbNode(0, 4, 1)
    for _ in range(3):
        out, _ = node.handle(1, BrbMessage(Phase.ECHO, 3, 1, "x", 1))
        assert out == []
    # relayer field must match the link it came from
    out, _ = node.handle(1, BrbMessage(Phase.ECHO, 3, 1, "x", 2))
    assert out == []


def test_only_origin_may_init_and_second_init_ignored():
    node = BrbNode(0, 4, 1)
    out, _ = node.handle(1, BrbMessage(Phase.INIT, 3, 1, "x", 1))
    assert out == []
    out, _ = node.handle(3, BrbMessage(Phase.INIT, 3, 1, "x", 3))
    assert len(out) == 4
    out, _ = node.handle(3, BrbMessage(Phase.INIT, 3, 1, "y", 3))
    assert out == []


def _readies(node, origin, seq, payload, relayers):
    got = []
    for r in relayers:
        got += node.handle(r, BrbMessage(Phase.READY, origin, seq, payload, r))[1]
    return got


def test_source_order_buffers_later_seq():
    node = BrbNode(0, 4, 1)
    assert _readies(node, 3, 2, "second", (1, 2, 3)) == []
    assert node.is_buffered(3, 2)
    got = _readies(node, 3, 1, "first", (1, 2, 3))
    assert [(d.seq, d.payload) for d in got] == [(1, "first"), (2, "second")]
    assert not node.is_buffered(3, 2)


def test_delivery_at_most_once():
    node = BrbNode(0, 4, 1)
    assert len(_readies(node, 3, 1, "x", (1, 2, 3))) == 1
    assert _readies(node, 3, 1, "x", (1, 2, 3)) == []


@pytest.mark.parametrize("n", [4, 5, 7, 10])
def test_message_count_matches_instrumented_network(n):
    f = (n - 1) // 3
    for seed in range(5):
        _, out = BrbNode(0, n, f).broadcast("tx")
        _, delivered, sent = run_network(n, f, [(0, d, m) for d, m in out], seed)
        assert sent == message_count(n)
        assert all(len(v) == 1 for v in delivered.values())
    assert message_count(4) == 27
    assert message_count(4, include_self=True) == 4 + 2 * 16


def test_three_broadcasts_delivered_in_order_everywhere():
    n, f = 4, 1
    src = BrbNode(1, n, f)
    initial = []
    for payload in ("a", "b", "c"):
        _, out = src.broadcast(payload)
        initial += [(1, d, m) for d, m in out]
    for seed in range(20):
        _, delivered, _ = run_network(n, f, initial, seed)
        for p in range(n):
            assert [d.payload for d in delivered[p]] == ["a", "b", "c"]


def test_two_senders_keep_per_sender_order():
    n, f = 4, 1
    initial = []
    for origin in (0, 1):
        node = BrbNode(origin, n, f)
        for k in range(2):
            _, out = node.broadcast(f"{origin}-{k}")
            initial += [(origin, d, m) for d, m in out]
    orders = set()
    for seed in range(10):
        _, delivered, _ = run_network(n, f, initial, seed)
        for p in range(n):
            seq = [d.payload for d in delivered[p]]
            assert [x for x in seq if x.startswith("0")] == ["0-0", "0-1"]
            assert [x for x in seq if x.startswith("1")] == ["1-0", "1-1"]
            orders.add(tuple(seq))
    assert len(orders) > 1


def test_equivocating_sender_never_splits_correct_nodes():
    n, f = 4, 1
    byz = 3
    for seed in range(300):
        rng = random.Random(seed)
        initial = []
        # conflicting INITs, and the Byzantine node also votes both ways
        for dst in range(n):
            payload = "x" if dst < 2 else "y"
            initial.append((byz, dst, BrbMessage(Phase.INIT, byz, 1, payload, byz)))
            for phase in (Phase.ECHO, Phase.READY):
                vote = rng.choice(["x", "y"])
                initial.append((byz, dst, BrbMessage(phase, byz, 1, vote, byz)))
        _, delivered, _ = run_network(n, f, initial, seed, byzantine={byz})
        payloads = {d.payload for p in range(3) for d in delivered[p]}
        assert len(payloads) <= 1
        counts = {len(delivered[p]) for p in range(3)}
        assert counts <= {0, 1}


def test_totality_when_origin_stops_after_init():
    # the origin's INITs reach everyone but it never echoes or readies
    n, f = 4, 1
    _, out = BrbNode(0, n, f).broadcast("tx")
    for seed in range(20):
        _, delivered, _ = run_network(n, f, [(0, d, m) for d, m in out], seed, silent={0})
        assert all(len(delivered[p]) == 1 for p in (1, 2, 3))


def test_totality_when_only_some_correct_saw_init():
    # origin (crashed) reached only 3 processes; all correct still deliver
    n, f = 4, 1
    _, out = BrbNode(0, n, f).broadcast("tx")
    partial = [(0, d, m) for d, m in out if d in (1, 2, 3)]
    for seed in range(20):
        _, delivered, _ = run_network(n, f, partial, seed, silent={0})
        assert all(len(delivered[p]) == 1 for p in (1, 2, 3))
