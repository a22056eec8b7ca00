"""Numerical services: encoding, losses, fitting, decoding, evaluation, scenes."""
