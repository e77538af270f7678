"""Left-nested implication toolkit: prover, fragment retrieval, Arrow model."""

__version__ = "0.1.0"
