"""Diffusions on negatively curved model spaces with drift/entropy estimators."""

__version__ = "0.1.0"
