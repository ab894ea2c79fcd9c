"""rskit: robust satisficing for Lipschitz-loss linear learning."""

__version__ = "0.1.0"
