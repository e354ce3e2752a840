"""Particle filtering of single-shot projective qubit measurements.

Subpackages cover the particle/branching machinery (``core``), the
amplitude-quantized measurement model (``measurement``), the plain bootstrap
filter (``bootstrap``), the adaptive two-layer filter (``nmqa``), simulation
ground truth (``simworld``), and the scaling-experiment harness (``harness``).
"""

__version__ = "0.1.0"
