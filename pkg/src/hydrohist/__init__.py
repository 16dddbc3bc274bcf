"""Diffusive and hydrodynamic coarse-grainings of quantum Brownian particles.

Subpackages:

- ``phase_space``: Wigner grids, density matrices, marginals, transforms.
- ``propagator``: single-particle quantum-Brownian-motion dynamics.
- ``ensemble``: statistics of N-particle product ensembles.
- ``histories``: exact decoherent-histories computations on toy Hilbert spaces.
- ``local_equilibrium``: local-equilibrium states and hydrodynamic averages.
- ``scenarios``: named, reproducible experiment runner.
"""

__version__ = "0.1.0"
