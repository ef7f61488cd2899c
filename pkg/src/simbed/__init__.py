"""simbed: a simulation-backed wireless testbed orchestration framework."""

__version__ = "0.1.0"
