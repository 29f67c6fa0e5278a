"""Driven multi-mode quantum Rabi model: spectra, sideband selection rules, effective couplings, fits."""
__version__ = "0.1.0"
