"""crushpool: a mini RNG test battery run on an HTCondor-like opportunistic pool."""

__version__ = "0.1.0"
