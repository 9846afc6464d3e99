"""Dataset curation and model-evaluation engine for herbicide-trial imagery."""

__version__ = "0.1.0"
