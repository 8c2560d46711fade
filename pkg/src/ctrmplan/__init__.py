"""Multi-agent path planning on learned cooperative timed roadmaps."""

__version__ = "0.1.0"
