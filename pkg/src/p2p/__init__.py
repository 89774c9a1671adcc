"""Track-centric trajectory prediction with pursuit-feasibility evaluation."""

__version__ = "0.1.0"
