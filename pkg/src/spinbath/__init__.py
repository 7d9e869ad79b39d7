"""Process-tensor simulation of the biased spin-boson model and its bath observables."""

__version__ = "0.1.0"
