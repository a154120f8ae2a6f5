"""Polytope-basis covers of labelled data and the ReLU networks that realize them."""

__version__ = "0.1.0"
