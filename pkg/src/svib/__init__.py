"""Information-bottleneck state abstraction for actor-critic RL, on numpy."""

__version__ = "0.1.0"
