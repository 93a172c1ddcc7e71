"""
Delegated Proof of Reputation scoring engine

Computes per-account reputation from stake power, resource usage and a
HodgeRank transaction-graph ranking, and elects block producers by
reputation-weighted voting.
"""

__version__ = "0.1.0"
