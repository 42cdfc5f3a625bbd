"""Attention-augmented adversarial reward inference for multi-agent task allocation."""

__version__ = "0.1.0"
