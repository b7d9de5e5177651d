"""Laplace eigenfunctions on polygons and their local mass near boundary points.

Modules
-------
geometry     polygon domains, point classification, corner frames
cutoff       smooth radial cutoffs with derivative bounds
discretize   triangulation and P1/P2 finite elements
eigensolve   shift-invert Lanczos for the lowest eigenpairs
oracles      closed-form modes, Bessel functions, exact polynomial checks
analysis     local masses, commutator pairings and the mass-bound ledger
cli          the ``eigenlab`` command
"""

__version__ = "0.1.0"
