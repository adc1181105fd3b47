"""Software effort estimation with integrated project risk exposure."""

__version__ = "0.1.0"
