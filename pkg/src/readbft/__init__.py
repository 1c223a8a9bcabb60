"""Simulator and library for BFT state machine replication with fast reads."""

__version__ = "0.1.0"
