"""Rauzy-Veech-Zorich renormalisation and recurrence statistics toolkit."""

__version__ = "0.1.0"
