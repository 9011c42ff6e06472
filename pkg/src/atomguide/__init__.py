"""Classical and quantum simulation of cold atoms in crossed optical waveguides."""

__version__ = "0.1.0"
