"""Data-driven joint chance-constrained control via kernel distribution embeddings.

The package fits a conditional-distribution embedding from trajectory data,
assembles a linear program over mixture weights on a finite control library,
and validates the resulting randomized open-loop policies by Monte-Carlo
simulation on the true stochastic system.
"""

__version__ = "0.1.0"
