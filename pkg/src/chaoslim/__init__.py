"""chaoslim: simulation and exact-oracle verification of partial-sum limit
theorems for multilinear sequences driven by null-recurrent renewal dynamics."""

__version__ = "0.1.0"
