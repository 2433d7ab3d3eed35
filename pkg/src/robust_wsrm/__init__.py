"""Robust weighted-sum-rate beamforming for multicell MISO downlinks with bounded CSI errors."""

__version__ = "0.1.0"
