"""Passive Wi-Fi TDoA indoor localization."""

__version__ = "0.1.0"
