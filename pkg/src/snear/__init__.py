"""Simulator for decentralized optimization with nested inexact consensus.

Subpackages and modules
-----------------------
topology    graphs and consensus matrices
operators   communication and gradient inexactness operators
objectives  per-node objectives, data ingestion, centralized ground truth
algorithms  S-NEAR-DGD, DGD, EXTRA, DIGing
analysis    metrics, termination, costs and theoretical bounds
harness     configuration, sweeps, plot data and the ``snear`` CLI
"""

__version__ = "0.1.0"
