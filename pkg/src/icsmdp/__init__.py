"""Interface-constrained SMDPs: environments, decentralized Q-learning and oracles."""

__version__ = "0.1.0"
