"""Synchronized multimodal acquisition, calibration and validation toolkit
for teleoperated robot consoles."""

__version__ = "0.1.0"
