"""Two-stage remote entanglement between a superconducting qubit and a distant magnon."""

__version__ = "0.1.0"
