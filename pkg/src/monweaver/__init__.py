"""Fine-grained synchronization synthesis for implicit monitors."""

__version__ = "0.1.0"
