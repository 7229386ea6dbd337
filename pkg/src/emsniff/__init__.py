"""Locate high-leakage probe positions on a chip with few EM measurements,
then recover the AES key there with correlation analysis.

The package runs against a simulated device (``device``) or emits motion
commands for a G-code scanner (``instrument``).
"""
from .kernels import BACKEND
from .device import SimDeviceConfig, load_scenario
from .search import SearchParams
from .pipeline import full_scan, sniff

__version__ = "0.1.0"

__all__ = ["BACKEND", "SimDeviceConfig", "load_scenario", "SearchParams", "full_scan", "sniff", "__version__"]
