"""Best-of-N query reformulation with an outcome-supervised reward model."""

__version__ = "0.1.0"
