"""Redundant LiDAR + Wi-Fi global localization in pre-mapped environments."""

__version__ = "0.1.0"
