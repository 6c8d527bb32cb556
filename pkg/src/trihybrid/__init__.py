"""Tri-hybrid (digital, analog, holographic-surface) beamforming for joint
sensing and communication."""

__version__ = "0.1.0"
