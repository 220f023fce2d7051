"""Programmatic scenarios used by the benchmarks and the acceptance suite."""

from __future__ import annotations

import random

from .byzantine import CHEATS
from .node import Mutations
from .scenario import build_script
from .simnet import ByzantineSpec, GenesisAccount, NetworkConfig

BYZANTINE_MIX = ("equivocator", "overspender", "channel-cheater")


def default_f(n: int) -> int:
    return (n - 1) // 3


def accounts(n: int, balance: int) -> list[GenesisAccount]:
    return [GenesisAccount(f"acct{p}", p, balance) for p in range(n)]


def ledger_transfer(n: int, seed: int, f: int | None = None) -> NetworkConfig:
    """One ledger transfer by p0 followed by one read, fault-free."""
    f = default_f(n) if f is None else f
    script = build_script({0: [
        {"op": "ledger.transfer", "args": {"source": "acct0", "outputs": [["acct1", 1]]}},
        {"op": "ledger.read", "args": {"account": "acct1"}},
    ]})
    return NetworkConfig(n, f, seed, accounts(n, 10), script=script)


def channel_session(n: int, k: int, seed: int, deposit: int | None = None,
                    f: int | None = None) -> NetworkConfig:
    """p0 opens a channel to p1, pays 1 k times; p1 closes once paid in full."""
    f = default_f(n) if f is None else f
    deposit = k if deposit is None else deposit
    ch = {"source": "acct0", "target": "acct1"}
    script = build_script({
        0: [{"op": "channel.open", "args": {**ch, "amount": deposit}},
            {"op": "channel.transfer", "args": {**ch, "amount": 1}, "repeat": k}],
        1: [{"op": "channel.target_close", "args": dict(ch),
             "when": {"target_balance": {**ch, "at_least": k}}}],
    })
    return NetworkConfig(n, f, seed, accounts(n, deposit), script=script)


def bsc_workload(seed: int, mutations: Mutations = Mutations()) -> NetworkConfig:
    """Mixed Byzantine run, n=7, f=2, at most 12 correct operations.

    Processes 5 and 6 are Byzantine, each with a behaviour drawn from
    ``BYZANTINE_MIX`` by a generator seeded with ``seed``; the cheat variant
    is drawn the same way.
    """
    n, f = 7, 2
    pick = random.Random(f"bsc-{seed}")
    behaviours = {5: pick.choice(BYZANTINE_MIX), 6: pick.choice(BYZANTINE_MIX)}
    variant = pick.choice(CHEATS)
    p0ch = {"source": "acct0", "target": "acct1"}
    per_process: dict[int, list[dict]] = {
        0: [{"op": "channel.open", "args": {**p0ch, "amount": 10}},
            {"op": "channel.transfer", "args": {**p0ch, "amount": 2}},
            {"op": "channel.transfer", "args": {**p0ch, "amount": 3}},
            {"op": "ledger.read", "args": {"account": "acct0"}}],
        1: [{"op": "channel.target_close", "args": dict(p0ch),
             "when": {"target_balance": {**p0ch, "at_least": 5}}},
            {"op": "ledger.read", "args": {"account": "acct1"}}],
        2: [{"op": "ledger.transfer", "args": {"source": "acct2", "outputs": [["acct1", 4]]}},
            {"op": "ledger.read", "args": {"account": "acct2"}}],
        3: [{"op": "ledger.transfer", "args": {"source": "acct3", "outputs": [["acct0", 3]]}},
            {"op": "ledger.read", "args": {"account": "acct3"}}],
    }
    byz = []
    cheater = None
    for pid, behaviour in behaviours.items():
        if behaviour == "equivocator":
            op = {"op": "byz.equivocate", "args": {"dests": ["acct2", "acct3"]}}
        elif behaviour == "overspender":
            op = {"op": "byz.overspend", "args": {"dests": ["acct2", "acct3", "acct4"]}}
        else:
            op = {"op": "byz.cheat",
                  "args": {"target": "acct1", "amount": 6, "variant": variant}}
            cheater = pid if cheater is None else cheater
        per_process[pid] = [op]
        byz.append(ByzantineSpec(pid, behaviour))
    if cheater is not None:
        ch = {"source": f"acct{cheater}", "target": "acct1"}
        per_process[1] += [
            {"op": "channel.target_close", "args": dict(ch),
             "when": {"target_balance": {**ch, "at_least": 2}}},
            {"op": "ledger.read", "args": {"account": "acct1"}},
        ]
    script = build_script(per_process, {5, 6})
    return NetworkConfig(n, f, seed, accounts(n, 20), byz, script, mutations)
