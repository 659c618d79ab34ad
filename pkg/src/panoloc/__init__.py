"""Monocular metric localization against a geotagged panorama database."""

__version__ = "0.1.0"
