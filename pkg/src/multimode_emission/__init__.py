"""Multimode photon emission from Kerr-nonlinear cavities and recapture of the dominant mode."""

from .io import VERSION as __version__

__all__ = ["__version__"]
