"""Parameter-shift fidelity susceptibility for the transverse-field Ising chain."""

__version__ = "0.1.0"
