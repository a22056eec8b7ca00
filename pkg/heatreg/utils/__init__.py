"""Utility helpers: logging, tensor files, digests."""
