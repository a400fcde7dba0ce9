"""Decentralized consensus optimization with synchronous and asynchronous primal-dual solvers."""

__version__ = "0.1.0"
