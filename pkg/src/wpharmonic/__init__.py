"""Harmonic maps into the completed Weil-Petersson model surface."""
