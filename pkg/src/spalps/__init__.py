"""Mean-field compiler and simulators for spatial population process models."""

__version__ = "0.1.0"
FORMAT_VERSION = 1
