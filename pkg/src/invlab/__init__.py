"""invlab: a Monte Carlo laboratory for the power of group-invariant tests.

Simulates many-parameter testing problems (normal many-means,
exponential families, Neyman-Scott layouts, uniform spacings), computes
orbit-averaged likelihood ratios over orthogonal and permutation
groups, and runs the permutation/bootstrap limit machinery and power
sweeps that exhibit the collapse of invariant tests against contiguous
alternatives — while Neyman-Pearson and quadratic-basis tests keep
their power.
"""

__version__ = "0.1.0"

from . import experiments, models, orbit, permclt, rng, stats  # noqa: F401
