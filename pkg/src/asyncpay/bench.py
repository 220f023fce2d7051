"""Message-complexity benchmark: cost per operation as n grows."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass
from typing import Callable

from . import simnet, workloads
from .broadcast import message_count


@dataclass
class BenchRow:
    n: int
    f: int
    reps: int
    ledger_transfer: float
    channel_transfer: float
    read: float
    closed_form: int
    floor: float
    samples: list[int]


Observer = Callable[[simnet.RunResult], None]


def bench_n(n: int, reps: int, seed: int, k: int = 10,
            observe: Observer | None = None) -> BenchRow:
    """``observe`` sees every finished run, e.g. to collect invariant breaches."""
    f = workloads.default_f(n)
    ledger, chan, reads = [], [], []
    for rep in range(reps):
        r = simnet.run(workloads.ledger_transfer(n, seed + rep))
        ledger.append(r.metrics.op("p0.1").msgs_correct)
        reads.append(r.metrics.op("p0.2").msgs_correct)
        c = simnet.run(workloads.channel_session(n, k, seed + rep))
        if observe:
            observe(r)
            observe(c)
        pays = c.metrics.of_kind("channel.transfer")
        chan.append(sum(m.msgs_correct for m in pays) / len(pays))
    return BenchRow(n, f, reps, statistics.fmean(ledger), statistics.fmean(chan),
                    statistics.fmean(reads), message_count(n), (f / 2) ** 2, ledger)


def fit_exponent(rows: list[BenchRow]) -> float:
    """Slope of log(ledger-transfer messages) against log(n)."""
    xs = [math.log(r.n) for r in rows]
    ys = [math.log(r.ledger_transfer) for r in rows]
    return statistics.linear_regression(xs, ys).slope


def bench(n_list: list[int], reps: int, seed: int,
          observe: Observer | None = None) -> tuple[list[BenchRow], float]:
    for n in n_list:
        if n < 4:
            raise ValueError("bench needs n >= 4")
    rows = [bench_n(n, reps, seed, observe=observe) for n in n_list]
    return rows, fit_exponent(rows) if len(rows) > 1 else float("nan")


def to_csv(rows: list[BenchRow], exponent: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "f", "reps", "ledger_transfer", "channel_transfer", "read",
                "closed_form", "floor"])
    for r in rows:
        w.writerow([r.n, r.f, r.reps, f"{r.ledger_transfer:g}", f"{r.channel_transfer:g}",
                    f"{r.read:g}", r.closed_form, f"{r.floor:g}"])
    buf.write(f"# fit_exponent,{exponent:.4f}\n")
    return buf.getvalue()
