"""Fidelity-based state characterization for homodyne and polarization tomography."""

__version__ = "0.1.0"
