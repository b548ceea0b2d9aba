"""Total variation distance between products of Bernoulli distributions."""

__version__ = "0.1.0"
