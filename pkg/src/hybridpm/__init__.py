"""Hybrid predictive models: interpretable substitutes routed in front of a black box."""

__version__ = "0.1.0"
