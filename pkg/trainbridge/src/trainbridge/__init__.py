"""Bridge between the curation pipeline and the deep-learning ecosystem.

Produces `.agft` feature files and prediction masks; all metrics and weights
stay on the pipeline side, exchanged through files only.
"""

__version__ = "0.1.0"
