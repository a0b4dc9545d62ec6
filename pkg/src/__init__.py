"""
CP-FBMA waveform and covariance optimization toolkit
Sum-rate evaluation, waveform and joint waveform/covariance optimization,
LMMSE detection and batch experiment scenarios for the CP-FBMA uplink.
"""

__version__ = "1.0.0"
__author__ = "CP-FBMA Development Team"
