"""skyfed: federated catalog cross-identification over HTTP skynodes.

A portal parses an extended SQL dialect (AREA / XMATCH clauses), plans a
daisy-chain execution order from per-archive object counts, and drives an
iterative probabilistic spatial join across independent catalog node
services. An image cutout service renders mosaics of the search area.
"""

__version__ = "0.1.0"
