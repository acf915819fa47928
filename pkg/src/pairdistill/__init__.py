"""Generate-filter-quantize engine for distilling sentence-pair datasets."""

__version__ = "0.1.0"
