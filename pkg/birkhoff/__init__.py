"""Swap calculus, Markov bases and fiber samplers for the (n,r)-Birkhoff ranking model."""

__version__ = "0.1.0"
