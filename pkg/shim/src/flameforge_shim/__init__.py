"""flameforge-shim: reference model server for the flameforge wire protocol."""

__version__ = "0.1.0"
