"""Consensus-free money transfer with off-chain unidirectional payment channels.

The package simulates a Byzantine asynchronous network in which a replicated
asset-transfer ledger runs on top of source-ordered reliable broadcast, and
unidirectional payment channels run on top of the ledger. It also ships a
sequential-consistency checker for the recorded histories and a small model
checker for the two-process consensus reductions.
"""

__version__ = "0.1.0"
