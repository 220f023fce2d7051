"""Scenario files: YAML descriptions of a simulated run.

Example::

    n: 4
    f: 1
    seed: 7
    genesis:
      - {account: alice, owner: 0, balance: 20}
      - {account: bob, owner: 1, balance: 0}
    byzantine:
      - {process: 3, behavior: crash}
    script:
      0:
        - {op: channel.open, args: {source: alice, target: bob, amount: 11}}
        - {op: channel.transfer, args: {source: alice, target: bob, amount: 1}, repeat: 10}
      1:
        - op: channel.target_close
          args: {source: alice, target: bob}
          when: {target_balance: {source: alice, target: bob, at_least: 10}}

Each scripted operation may carry ``repeat`` (default 1), ``at`` (earliest
step) and ``when`` (a start condition, see ``Node.condition_holds``).
Operations get ids ``p<pid>.<k>``, or ``byz<pid>.<k>`` on Byzantine processes.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .node import Invocation, Mutations
from .simnet import ByzantineSpec, ConfigError, GenesisAccount, NetworkConfig

_TOP_KEYS = {"n", "f", "seed", "genesis", "byzantine", "mutations", "scheduler",
             "starve", "starve_steps", "step_cap", "script", "name", "description"}


def op_prefix(pid: int, byzantine: set[int]) -> str:
    return f"byz{pid}" if pid in byzantine else f"p{pid}"


def build_script(per_process: dict[int, list[dict[str, Any]]],
                 byzantine: set[int] = frozenset()) -> list[Invocation]:
    """Expand per-process op lists (with ``repeat``) into invocations."""
    script: list[Invocation] = []
    for pid in sorted(per_process):
        k = 0
        for entry in per_process[pid] or []:
            if not isinstance(entry, dict) or "op" not in entry:
                raise ConfigError(f"process {pid}: each script entry needs an 'op'")
            extra = set(entry) - {"op", "args", "repeat", "at", "when"}
            if extra:
                raise ConfigError(f"process {pid}: unknown script keys {sorted(extra)}")
            repeat = entry.get("repeat", 1)
            if type(repeat) is not int or repeat < 0:
                raise ConfigError(f"process {pid}: repeat must be a non-negative int")
            for _ in range(repeat):
                k += 1
                script.append(Invocation(
                    f"{op_prefix(pid, byzantine)}.{k}", pid, entry["op"],
                    dict(entry.get("args") or {}), entry.get("when"), int(entry.get("at", 0))))
    return script


def config_from_dict(data: dict[str, Any], *, seed: int | None = None) -> NetworkConfig:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
    try:
        n, f = int(data["n"]), int(data["f"])
        genesis = [GenesisAccount(str(g["account"]), int(g["owner"]), g["balance"])
                   for g in data.get("genesis") or []]
        byz = [ByzantineSpec(int(b["process"]), str(b["behavior"]), dict(b.get("args") or {}))
               for b in data.get("byzantine") or []]
        mutations = Mutations.from_names(data.get("mutations") or [])
        script = build_script({int(k): v for k, v in (data.get("script") or {}).items()},
                              {b.process for b in byz})
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario: {exc!r}") from exc
    cfg = NetworkConfig(
        n=n, f=f, seed=int(data.get("seed", 0)) if seed is None else seed,
        genesis=genesis, byzantine=byz, script=script, mutations=mutations,
        scheduler=str(data.get("scheduler", "uniform")), starve=data.get("starve"),
        starve_steps=int(data.get("starve_steps", 0)),
        step_cap=int(data.get("step_cap", 10**6)))
    cfg.validate()
    return cfg


def load_config(path: str | Path, *, seed: int | None = None) -> NetworkConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return config_from_dict(data, seed=seed)


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``open-pay100-close``."""
    base = resources.files("asyncpay") / "scenarios"
    for suffix in (".yaml", ".jsonl"):
        candidate = base / f"{name}{suffix}"
        if candidate.is_file():
            return Path(str(candidate))
    raise FileNotFoundError(f"no bundled scenario {name!r}")
