"""Split-learning remote inference over a shared wireless uplink: analog
over-the-air aggregation versus a digital orthogonal-subcarrier baseline."""

__version__ = "0.1.0"
