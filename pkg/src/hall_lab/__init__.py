"""Response coefficients of gapped lattice fermions on a discrete torus."""

__version__ = "0.1.0"
