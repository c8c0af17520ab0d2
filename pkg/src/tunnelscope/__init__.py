"""Tunnel traffic analysis toolkit.

Extracts metadata features from packet captures and runs the supervised
pipeline: tunnel detection, tunnel classification, and application
classification inside tunnels.
"""

__version__ = "0.1.0"
