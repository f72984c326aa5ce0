"""Synchronous authenticated Byzantine consensus with n = 2f+1 replicas."""

__version__ = "0.1.0"
