"""Network diagnostics for corruption risk in public-procurement markets.

The pipeline ingests contract-award records, maps each market as a weighted
bipartite issuer-winner network, and measures where single-bidding risk sits
in that network: in the core (weighted k-shell decomposition) and across
link communities (line-graph Louvain). Observed statistics are benchmarked
against sector-preserving permutation null models that shuffle single-bid
labels only within 2-digit CPV classes.
"""

__version__ = "0.1.0"

from .errors import DataError

__all__ = ["DataError", "__version__"]
