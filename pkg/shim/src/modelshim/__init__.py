"""Reference model server for the pairdistill wire protocol."""

__version__ = "0.1.0"
