"""Best-of-both-worlds FTRL for K-armed linear contextual bandits."""
__version__ = "0.1.0"
