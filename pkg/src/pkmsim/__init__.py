"""Symbolic simulator for WiMAX PKM-family authorization handshakes under a Dolev-Yao adversary."""

__version__ = "0.1.0"
