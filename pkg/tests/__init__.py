"""
Tests for the CP-FBMA waveform and covariance optimization toolkit
"""
