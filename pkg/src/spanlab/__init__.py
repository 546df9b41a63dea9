"""spanlab: toxic-span sequence labeling at desk scale."""

__version__ = "0.1.0"
